//! Global assembly of the HHO system, essential-data lifting, static
//! condensation of cell bubbles, sparse solve, and per-cell reconstruction.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{CellBasis, NodeSet};
use crate::clip::{clip_segment_to_cells, split_triangle, Line};
use crate::error::{Error, Result};
use crate::fe_space::{l2_project_face, BcType, DofMap, ReferenceElement};
use crate::hho_local::{LocalCell, LocalOperator, WeightMode};
use crate::mesh::{AffineMap, Mesh, Point};
use crate::quadrature::{cell_quadrature, face_quadrature, QuadratureRule};
use crate::solver::{estimate_condition, relative_residual, CholeskyFactor, ConditionEstimate};
use crate::sparse::{CsrMatrix, Triplets};

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
/// Boundary datum evaluated at a point with the outward unit normal there.
pub type BoundaryFn = Arc<dyn Fn(Point, Point) -> f64 + Send + Sync>;

/// Discretization method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Method {
    #[default]
    Hho,
    Ipdg,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Hho => "hho",
            Method::Ipdg => "ipdg",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hho" => Ok(Method::Hho),
            "ipdg" => Ok(Method::Ipdg),
            _ => Err(Error::Input(format!("unknown method '{s}' (expected hho or ipdg)"))),
        }
    }
}

/// Line density on the segment `[a, b]`.
#[derive(Clone)]
pub struct LineSource {
    pub a: Point,
    pub b: Point,
    pub density: ScalarFn,
}

/// Load and boundary data of a problem.
#[derive(Clone)]
pub struct LoadSpec {
    /// Regular part of `f`.
    pub f_reg: ScalarFn,
    /// Line across which `f_reg` may be discontinuous. Cells cut by it are
    /// integrated piecewise.
    pub interface: Option<Line>,
    pub line_source: Option<LineSource>,
    /// `u` on the boundary.
    pub g0: ScalarFn,
    /// `∂_n u` on the boundary (type I only).
    pub g1: Option<BoundaryFn>,
    /// `∂_nn u` on the boundary (type II only; absent means zero).
    pub g2: Option<BoundaryFn>,
}

impl fmt::Debug for LoadSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LoadSpec")
            .field("interface", &self.interface)
            .field("line_source", &self.line_source.as_ref().map(|l| (l.a, l.b)))
            .field("g1", &self.g1.is_some())
            .field("g2", &self.g2.is_some())
            .finish()
    }
}

impl LoadSpec {
    /// `f = 0` and homogeneous boundary data.
    pub fn homogeneous(bc: BcType) -> Self {
        Self {
            f_reg: Arc::new(|_| 0.0),
            interface: None,
            line_source: None,
            g0: Arc::new(|_| 0.0),
            g1: (bc == BcType::Clamped).then(|| Arc::new(|_, _| 0.0) as BoundaryFn),
            g2: None,
        }
    }

    pub fn check(&self, bc: BcType) -> Result<()> {
        match bc {
            BcType::Clamped if self.g2.is_some() => {
                Err(Error::Input("natural data g2 given for clamped (type I) boundary conditions".into()))
            }
            BcType::Clamped if self.g1.is_none() => {
                Err(Error::Input("clamped (type I) boundary conditions need g1 = ∂_n u".into()))
            }
            BcType::SimplySupported if self.g1.is_some() => {
                Err(Error::Input("essential data g1 given for simply supported (type II) boundary conditions".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    pub weight_mode: WeightMode,
    pub node_set: NodeSet,
    /// Extra load quadrature degree on top of `p`; `None` means `p + 4`.
    pub q_rhs: Option<usize>,
    /// IPDG penalty factor `n_∂` in `ϖ_F = n_∂ (k + 1)²`.
    pub ipdg_penalty: f64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { weight_mode: WeightMode::WeightedK, node_set: NodeSet::Warped, q_rhs: None, ipdg_penalty: 4.0 }
    }
}

impl AssemblyOptions {
    pub fn load_degree(&self, p: usize) -> usize {
        p + self.q_rhs.unwrap_or(p + 4)
    }
}

/// Stored per-cell operators needed after the solve.
#[derive(Debug, Clone)]
pub struct CellData {
    pub r: DMatrix<f64>,
    /// Stabilization factor, `S = DᵀD`.
    pub d: DMatrix<f64>,
}

/// Assembled system before and after essential elimination.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub method: Method,
    pub bc: BcType,
    pub dofmap: DofMap,
    pub options: AssemblyOptions,
    /// Matrix over all unknowns, before elimination.
    pub full_matrix: CsrMatrix,
    pub full_rhs: Vec<f64>,
    /// Matrix over the free unknowns.
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Global index of each free unknown, increasing.
    pub free: Vec<usize>,
    /// Values on essential unknowns, zero elsewhere.
    pub lift: Vec<f64>,
    /// HHO only.
    pub cells: Vec<CellData>,
    /// Whether bubble unknowns couple only within their own cell.
    pub condensable: bool,
    pub assembly_seconds: f64,
    pub warnings: Vec<String>,
}

impl LinearSystem {
    pub fn num_unknowns(&self) -> usize {
        self.full_rhs.len()
    }

    /// Discrete energy `xᵀ A x` over all unknowns.
    pub fn energy(&self, x: &HybridVector) -> f64 {
        dot(&self.full_matrix.matvec(&x.values), &x.values)
    }

    /// `ℓ(x)`, the assembled load applied to `x`.
    pub fn load(&self, x: &HybridVector) -> f64 {
        dot(&self.full_rhs, &x.values)
    }

    /// Local hybrid vector of `cell` (face data sign-adjusted to the cell).
    pub fn local_vector(&self, x: &HybridVector, cell: usize) -> DVector<f64> {
        match self.method {
            Method::Hho => {
                let g = self.dofmap.hybrid_gather(cell);
                DVector::from_iterator(g.len(), g.iter().map(|&(i, s)| s * x.values[i]))
            }
            Method::Ipdg => {
                let nodes = self.dofmap.cell_nodes(cell);
                DVector::from_iterator(nodes.len(), nodes.iter().map(|&i| x.values[i]))
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Global coefficient vector over all unknowns, including essential ones.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridVector {
    pub values: Vec<f64>,
}

impl HybridVector {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    /// Global reduction `Î_h(v)`: Lagrange interpolation on the cell space,
    /// and for HHO the L² projection of `n_F · ∇v` on every face.
    pub fn interpolate(
        mesh: &Mesh,
        dofmap: &DofMap,
        node_set: NodeSet,
        with_faces: bool,
        v: impl Fn(Point) -> f64 + Sync,
        grad: impl Fn(Point) -> Point + Sync,
    ) -> Result<Self> {
        let p = dofmap.cell_degree();
        let basis = CellBasis::new(p, node_set);
        let n = if with_faces { dofmap.total() } else { dofmap.cell_space() };
        let mut values = vec![0.0; n];
        for c in 0..mesh.num_cells() {
            let map = mesh.cell_map(c);
            for (xi, &g) in basis.nodes().iter().zip(dofmap.cell_nodes(c)) {
                values[g] = v(map.to_physical(xi));
            }
        }
        if with_faces {
            let k = dofmap.order();
            for (f, rec) in mesh.faces().iter().enumerate() {
                let (a, b) = (mesh.vertices()[rec.endpoints[0]], mesh.vertices()[rec.endpoints[1]]);
                let coef = l2_project_face(a, b, |x| rec.normal.dot(&grad(x)), k, 2 * p + 10)?;
                for (j, c) in coef.into_iter().enumerate() {
                    values[dofmap.face_dof(f, j)] = c;
                }
            }
        }
        Ok(Self { values })
    }
}

/// `∫_K f φ_i` for the cell nodes, splitting the cell along `interface`.
pub(crate) fn cell_load(
    basis: &CellBasis,
    rule: &QuadratureRule,
    tri: &[Point; 3],
    f: &(dyn Fn(Point) -> f64 + Send + Sync),
    interface: Option<&Line>,
) -> Vec<f64> {
    let map = AffineMap::from_vertices(tri);
    let pieces = match interface {
        Some(line) => split_triangle(tri, line),
        None => vec![*tri],
    };
    let mut out = vec![0.0; basis.dim()];
    for piece in pieces {
        let sub = AffineMap::from_vertices(&piece);
        let jac = sub.det.abs();
        for (xi, w) in rule.points.iter().zip(&rule.weights) {
            let x = sub.to_physical(xi);
            let fx = f(x) * w * jac;
            if fx == 0.0 {
                continue;
            }
            for (o, phi) in out.iter_mut().zip(basis.eval_values(&map.to_reference(&x))) {
                *o += fx * phi;
            }
        }
    }
    out
}

/// Adds `∫_Γ g φ_i` for the line source to the cell-space entries of `b`.
pub(crate) fn add_line_source(
    mesh: &Mesh,
    dofmap: &DofMap,
    basis: &CellBasis,
    source: &LineSource,
    degree: usize,
    b: &mut [f64],
) -> Result<()> {
    let rule = face_quadrature(degree)?;
    for piece in clip_segment_to_cells(mesh, source.a, source.b)? {
        let map = mesh.cell_map(piece.cell);
        let len = piece.length();
        let nodes = dofmap.cell_nodes(piece.cell);
        for (t, w) in rule.points.iter().zip(&rule.weights) {
            let x = piece.start + (piece.end - piece.start) * t.x;
            let gx = (source.density)(x) * w * len;
            for (&g, phi) in nodes.iter().zip(basis.eval_values(&map.to_reference(&x))) {
                b[g] += gx * phi;
            }
        }
    }
    Ok(())
}

/// Values pinned on essential unknowns: `g0` at boundary nodes, and with
/// `with_faces` the face projections of `g1` on boundary faces.
pub(crate) fn essential_lift(
    mesh: &Mesh,
    dofmap: &DofMap,
    basis: &CellBasis,
    load: &LoadSpec,
    n: usize,
    with_faces: bool,
) -> Result<Vec<f64>> {
    let mut lift = vec![0.0; n];
    for (f, rec) in mesh.faces().iter().enumerate().filter(|(_, r)| r.is_boundary) {
        let c = rec.cells.0;
        let map = mesh.cell_map(c);
        let e = (0..3).find(|&e| mesh.cell_faces(c)[e].face == f).expect("face belongs to its cell");
        for ((xi, kind), &g) in basis.nodes().iter().zip(basis.kinds()).zip(dofmap.cell_nodes(c)) {
            let on_face = match *kind {
                crate::basis::NodeKind::Vertex(v) => v == e || v == (e + 1) % 3,
                crate::basis::NodeKind::Edge { edge, .. } => edge == e,
                crate::basis::NodeKind::Interior(_) => false,
            };
            if on_face {
                lift[g] = (load.g0)(map.to_physical(xi));
            }
        }
        if with_faces && dofmap.bc() == BcType::Clamped {
            let g1 = load.g1.as_ref().expect("checked by LoadSpec::check");
            let (a, b) = (mesh.vertices()[rec.endpoints[0]], mesh.vertices()[rec.endpoints[1]]);
            let k = dofmap.order();
            let coef = l2_project_face(a, b, |x| g1(x, rec.normal), k, 2 * (k + 2) + 10)?;
            for (j, v) in coef.into_iter().enumerate() {
                lift[dofmap.face_dof(f, j)] = v;
            }
        }
    }
    Ok(lift)
}

/// Removes essential rows and columns, moving their coupling to the
/// right-hand side.
pub(crate) fn eliminate(
    full: &CsrMatrix,
    rhs: &[f64],
    essential: &[bool],
    lift: &[f64],
) -> (CsrMatrix, Vec<f64>, Vec<usize>) {
    let free: Vec<usize> = (0..rhs.len()).filter(|&i| !essential[i]).collect();
    let al = full.matvec(lift);
    let b = free.iter().map(|&i| rhs[i] - al[i]).collect();
    (full.principal_submatrix(&free), b, free)
}

/// Assembles the HHO system.
pub fn assemble(mesh: &Mesh, k: usize, bc: BcType, load: &LoadSpec, options: &AssemblyOptions) -> Result<LinearSystem> {
    let start = Instant::now();
    load.check(bc)?;
    let dofmap = DofMap::build(mesh, k, bc);
    let reference = ReferenceElement::new(k, options.node_set)?;
    let p = k + 2;
    let load_rule = cell_quadrature(options.load_degree(p))?;
    let n = dofmap.total();

    struct Local {
        data: CellData,
        a: DMatrix<f64>,
        b: Vec<f64>,
    }
    let locals: Vec<Local> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let cell = LocalCell::from_mesh(mesh, c);
            let op = LocalOperator::build(c, &cell, &reference, options.weight_mode)?;
            let a = op.stiffness();
            let b = cell_load(&reference.basis, &load_rule, &cell.vertices, &*load.f_reg, load.interface.as_ref());
            Ok(Local { data: CellData { r: op.r, d: op.d }, a, b })
        })
        .collect::<Result<_>>()?;

    let nloc = dofmap.local_size();
    let mut trip = Triplets::with_capacity(n, mesh.num_cells() * nloc * nloc);
    let mut rhs = vec![0.0; n];
    for (c, local) in locals.iter().enumerate() {
        let gather = dofmap.hybrid_gather(c);
        for (i, &(gi, si)) in gather.iter().enumerate() {
            for (j, &(gj, sj)) in gather.iter().enumerate() {
                trip.push(gi, gj, si * sj * local.a[(i, j)]);
            }
        }
        for (&g, v) in dofmap.cell_nodes(c).iter().zip(&local.b) {
            rhs[g] += v;
        }
    }
    let cells: Vec<CellData> = locals.into_iter().map(|l| l.data).collect();
    let full = trip.build();

    if let Some(src) = &load.line_source {
        add_line_source(mesh, &dofmap, &reference.basis, src, options.load_degree(p), &mut rhs)?;
    }
    if bc == BcType::SimplySupported {
        if let Some(g2) = &load.g2 {
            // (g2, χ_F)_F on boundary faces, where n_F is the outward normal.
            for (f, rec) in mesh.faces().iter().enumerate().filter(|(_, r)| r.is_boundary) {
                let (a, b) = (mesh.vertices()[rec.endpoints[0]], mesh.vertices()[rec.endpoints[1]]);
                let coef = l2_project_face(a, b, |x| g2(x, rec.normal), k, options.load_degree(p))?;
                for (j, v) in coef.into_iter().enumerate() {
                    rhs[dofmap.face_dof(f, j)] += v;
                }
            }
        }
    }

    let lift = essential_lift(mesh, &dofmap, &reference.basis, load, n, true)?;
    let (matrix, reduced_rhs, free) = eliminate(&full, &rhs, dofmap.essential(), &lift);
    Ok(LinearSystem {
        method: Method::Hho,
        bc,
        condensable: dofmap.has_condensable(),
        dofmap,
        options: *options,
        full_matrix: full,
        full_rhs: rhs,
        matrix,
        rhs: reduced_rhs,
        free,
        lift,
        cells,
        assembly_seconds: start.elapsed().as_secs_f64(),
        warnings: Vec::new(),
    })
}

/// Dense bubble block of one cell with its coupling to interface unknowns.
#[derive(Debug, Clone)]
pub struct BubbleBlock {
    /// Positions in the free numbering.
    pub bubbles: Vec<usize>,
    /// Positions in the condensed (interface) numbering.
    pub interface: Vec<usize>,
    pub chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// `A_bi`.
    pub coupling: DMatrix<f64>,
}

/// Schur complement on the interface unknowns.
#[derive(Debug, Clone)]
pub struct CondensedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Free-numbering position of each interface unknown.
    pub interface: Vec<usize>,
    pub blocks: Vec<BubbleBlock>,
    free_len: usize,
}

impl CondensedSystem {
    pub fn size(&self) -> usize {
        self.interface.len()
    }

    /// `b_i − Σ A_ib A_bb⁻¹ b_b` for a free-space right-hand side.
    pub fn reduce_rhs(&self, free_rhs: &[f64]) -> Vec<f64> {
        let mut rhs: Vec<f64> = self.interface.iter().map(|&i| free_rhs[i]).collect();
        let parts: Vec<DVector<f64>> = self
            .blocks
            .par_iter()
            .map(|blk| {
                let bb = DVector::from_iterator(blk.bubbles.len(), blk.bubbles.iter().map(|&j| free_rhs[j]));
                blk.coupling.transpose() * blk.chol.solve(&bb)
            })
            .collect();
        for (blk, g) in self.blocks.iter().zip(parts) {
            for (&qi, v) in blk.interface.iter().zip(g.iter()) {
                rhs[qi] -= v;
            }
        }
        rhs
    }

    /// Full free vector from the interface solution and the free-space
    /// right-hand side.
    pub fn recover(&self, interface_solution: &[f64], free_rhs: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.free_len];
        for (&i, &v) in self.interface.iter().zip(interface_solution) {
            x[i] = v;
        }
        let parts: Vec<Vec<f64>> = self
            .blocks
            .par_iter()
            .map(|blk| {
                let ui = DVector::from_iterator(blk.interface.len(), blk.interface.iter().map(|&j| interface_solution[j]));
                let bb = DVector::from_iterator(blk.bubbles.len(), blk.bubbles.iter().map(|&j| free_rhs[j]));
                blk.chol.solve(&(bb - &blk.coupling * ui)).iter().copied().collect()
            })
            .collect();
        for (blk, ub) in self.blocks.iter().zip(parts) {
            for (&i, v) in blk.bubbles.iter().zip(ub) {
                x[i] = v;
            }
        }
        x
    }
}

/// Eliminates the cell bubbles of `sys` by cellwise Schur complements. For
/// systems without bubbles the result is the free system itself.
pub fn condense(sys: &LinearSystem) -> Result<CondensedSystem> {
    let nfree = sys.free.len();
    let mut free_pos = vec![usize::MAX; sys.num_unknowns()];
    for (p, &g) in sys.free.iter().enumerate() {
        free_pos[g] = p;
    }
    let mut is_bubble = vec![false; nfree];
    let mut owner = vec![usize::MAX; nfree];
    let ncells = sys.dofmap.num_cells();
    if sys.condensable {
        for c in 0..ncells {
            for g in sys.dofmap.bubbles(c) {
                let p = free_pos[g];
                if p != usize::MAX {
                    is_bubble[p] = true;
                    owner[p] = c;
                }
            }
        }
    }
    let interface: Vec<usize> = (0..nfree).filter(|&i| !is_bubble[i]).collect();
    let mut ipos = vec![usize::MAX; nfree];
    for (q, &i) in interface.iter().enumerate() {
        ipos[i] = q;
    }
    let a = &sys.matrix;

    let blocks: Vec<BubbleBlock> = if sys.condensable {
        (0..ncells)
            .into_par_iter()
            .filter_map(|c| {
                let bubbles: Vec<usize> =
                    sys.dofmap.bubbles(c).map(|g| free_pos[g]).filter(|&p| p != usize::MAX).collect();
                if bubbles.is_empty() {
                    return None;
                }
                Some((c, bubbles))
            })
            .map(|(c, bubbles)| {
                let mut iface: Vec<usize> = Vec::new();
                for &b in &bubbles {
                    for (j, _) in a.row(b) {
                        if is_bubble[j] {
                            if owner[j] != c {
                                return Err(Error::Solver(format!("bubble of cell {c} couples to another cell")));
                            }
                        } else {
                            iface.push(ipos[j]);
                        }
                    }
                }
                iface.sort_unstable();
                iface.dedup();
                let nb = bubbles.len();
                let abb = DMatrix::from_fn(nb, nb, |i, j| a.get(bubbles[i], bubbles[j]));
                let coupling = DMatrix::from_fn(nb, iface.len(), |i, j| a.get(bubbles[i], interface[iface[j]]));
                let chol = abb.cholesky().ok_or(Error::SingularLocal { cell: c, what: "bubble block" })?;
                Ok(BubbleBlock { bubbles, interface: iface, chol, coupling })
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let ni = interface.len();
    let mut trip = Triplets::new(ni);
    for (q, &i) in interface.iter().enumerate() {
        for (j, v) in a.row(i) {
            if !is_bubble[j] {
                trip.push(q, ipos[j], v);
            }
        }
    }
    let contributions: Vec<DMatrix<f64>> = blocks
        .par_iter()
        .map(|blk| blk.coupling.transpose() * blk.chol.solve(&blk.coupling))
        .collect();
    for (blk, s) in blocks.iter().zip(&contributions) {
        for (i, &qi) in blk.interface.iter().enumerate() {
            for (j, &qj) in blk.interface.iter().enumerate() {
                trip.push(qi, qj, -s[(i, j)]);
            }
        }
    }
    let mut cs = CondensedSystem { matrix: trip.build(), rhs: Vec::new(), interface, blocks, free_len: nfree };
    cs.rhs = cs.reduce_rhs(&sys.rhs);
    Ok(cs)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveReport {
    pub assembly_seconds: f64,
    pub condense_seconds: f64,
    pub factor_seconds: f64,
    pub solve_seconds: f64,
    /// Stored entries of the Cholesky factor.
    pub factor_nnz: usize,
    /// Size of the factored system.
    pub unknowns: usize,
    pub condensed: bool,
    /// `‖Ax − b‖ / ‖b‖` on the free system.
    pub residual: f64,
}

/// Solves the system, by default through the condensed interface system.
/// One step of iterative refinement with a compensated residual follows the
/// direct solve.
pub fn solve(sys: &LinearSystem, condense_bubbles: bool) -> Result<(HybridVector, SolveReport)> {
    let mut report = SolveReport { assembly_seconds: sys.assembly_seconds, ..Default::default() };
    let condensed = if condense_bubbles && sys.condensable {
        let t = Instant::now();
        let cs = condense(sys)?;
        report.condense_seconds = t.elapsed().as_secs_f64();
        Some(cs)
    } else {
        None
    };
    let t = Instant::now();
    let factor = CholeskyFactor::factorize(condensed.as_ref().map_or(&sys.matrix, |cs| &cs.matrix))?;
    report.factor_seconds = t.elapsed().as_secs_f64();
    report.factor_nnz = factor.factor_nnz();

    let t = Instant::now();
    let apply = |b: &[f64]| match &condensed {
        Some(cs) => {
            let xi = factor.solve(&cs.reduce_rhs(b));
            cs.recover(&xi, b)
        }
        None => factor.solve(b),
    };
    let mut free_solution = apply(&sys.rhs);
    let r = sys.matrix.residual_compensated(&free_solution, &sys.rhs);
    for (x, d) in free_solution.iter_mut().zip(apply(&r)) {
        *x += d;
    }
    report.solve_seconds = t.elapsed().as_secs_f64();
    report.unknowns = condensed.as_ref().map_or(sys.free.len(), |cs| cs.size());
    report.condensed = condensed.is_some();
    report.residual = relative_residual(&sys.matrix, &free_solution, &sys.rhs);
    let mut values = sys.lift.clone();
    for (&g, v) in sys.free.iter().zip(free_solution) {
        values[g] = v;
    }
    Ok((HybridVector { values }, report))
}

/// Per-cell `P_{k+2}` nodal coefficients of `R_K(û_K)` (HHO) or of the
/// cell function itself (IPDG).
pub fn reconstruct_field(sys: &LinearSystem, x: &HybridVector) -> Vec<DVector<f64>> {
    (0..sys.dofmap.num_cells())
        .into_par_iter()
        .map(|c| {
            let local = sys.local_vector(x, c);
            match sys.method {
                Method::Hho => &sys.cells[c].r * local,
                Method::Ipdg => local,
            }
        })
        .collect()
}

/// Condition estimates of the free system and of its condensed form.
pub fn condition_numbers(
    sys: &LinearSystem,
    tol: f64,
    max_iter: usize,
    seed: Option<u64>,
) -> Result<(ConditionEstimate, Option<ConditionEstimate>)> {
    let f = CholeskyFactor::factorize(&sys.matrix)?;
    let full = estimate_condition(&sys.matrix, &f, tol, max_iter, seed);
    let cond = if sys.condensable {
        let cs = condense(sys)?;
        let fc = CholeskyFactor::factorize(&cs.matrix)?;
        Some(estimate_condition(&cs.matrix, &fc, tol, max_iter, seed))
    } else {
        None
    };
    Ok((full, cond))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Diagonal, Rectangle};
    use approx::assert_abs_diff_eq;

    fn unit(n: usize) -> Mesh {
        Mesh::generate_structured(n, Rectangle::unit_square(), Diagonal::default())
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        for bc in [BcType::Clamped, BcType::SimplySupported] {
            let sys = assemble(&unit(3), 1, bc, &LoadSpec::homogeneous(bc), &AssemblyOptions::default()).unwrap();
            let (x, _) = solve(&sys, true).unwrap();
            assert!(x.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn load_bc_mismatch_is_rejected() {
        let mut load = LoadSpec::homogeneous(BcType::Clamped);
        load.g2 = Some(Arc::new(|_, _| 0.0));
        assert!(matches!(
            assemble(&unit(2), 0, BcType::Clamped, &load, &AssemblyOptions::default()),
            Err(Error::Input(_))
        ));
        let load = LoadSpec::homogeneous(BcType::Clamped);
        assert!(assemble(&unit(2), 0, BcType::SimplySupported, &load, &AssemblyOptions::default()).is_err());
    }

    #[test]
    fn condensed_size_for_cubic_cells() {
        let mut sys =
            assemble(&unit(4), 1, BcType::Clamped, &LoadSpec::homogeneous(BcType::Clamped), &AssemblyOptions::default())
                .unwrap();
        // condensation over all unknowns: drop elimination for the count
        let n = sys.num_unknowns();
        sys.free = (0..n).collect();
        sys.matrix = sys.full_matrix.clone();
        sys.rhs = sys.full_rhs.clone();
        assert_eq!(n, 281);
        assert_eq!(condense(&sys).unwrap().size(), 249);
    }

    #[test]
    fn no_bubbles_means_identity_condensation() {
        let sys =
            assemble(&unit(3), 0, BcType::Clamped, &LoadSpec::homogeneous(BcType::Clamped), &AssemblyOptions::default())
                .unwrap();
        let cs = condense(&sys).unwrap();
        assert_eq!(cs.matrix, sys.matrix);
        assert_eq!(cs.rhs, sys.rhs);
    }

    #[test]
    fn global_kernel_is_affine() {
        let mesh = unit(2);
        for k in 0..=2 {
            let sys = assemble(&mesh, k, BcType::Clamped, &LoadSpec::homogeneous(BcType::Clamped), &AssemblyOptions::default())
                .unwrap();
            let a = sys.full_matrix.to_dense();
            let eig = nalgebra::SymmetricEigen::new(a.clone()).eigenvalues;
            let tol = 1e-10 * eig.amax();
            assert_eq!(eig.iter().filter(|&&l| l.abs() < tol).count(), 3);
            let aff = HybridVector::interpolate(
                &mesh,
                &sys.dofmap,
                sys.options.node_set,
                true,
                |x| 1.0 + 2.0 * x.x - 0.5 * x.y,
                |_| Point::new(2.0, -0.5),
            )
            .unwrap();
            let r = sys.full_matrix.matvec(&aff.values);
            assert!(r.iter().all(|v| v.abs() < 1e-10 * eig.amax()));
            let sub = sys.matrix.to_dense();
            assert!(sub.cholesky().is_some());
        }
    }

    #[test]
    fn assembly_is_bit_reproducible() {
        let mesh = unit(5);
        let mut load = LoadSpec::homogeneous(BcType::SimplySupported);
        load.f_reg = Arc::new(|x| (3.0 * x.x).sin() + x.y);
        let opts = AssemblyOptions::default();
        let a = assemble(&mesh, 2, BcType::SimplySupported, &load, &opts).unwrap();
        let b = assemble(&mesh, 2, BcType::SimplySupported, &load, &opts).unwrap();
        assert_eq!(a.full_matrix, b.full_matrix);
        assert_eq!(a.full_rhs, b.full_rhs);
    }

    #[test]
    fn condensed_recovery_solves_full_system() {
        let mesh = unit(3);
        let opts = AssemblyOptions::default();
        let mut sys =
            assemble(&mesh, 2, BcType::Clamped, &LoadSpec::homogeneous(BcType::Clamped), &opts).unwrap();
        for trial in 0..5 {
            sys.rhs = (0..sys.rhs.len()).map(|i| ((i * 31 + trial * 17) % 23) as f64 / 7.0 - 1.5).collect();
            let cs = condense(&sys).unwrap();
            let f = CholeskyFactor::factorize(&cs.matrix).unwrap();
            let x = cs.recover(&f.solve(&cs.rhs), &sys.rhs);
            assert!(relative_residual(&sys.matrix, &x, &sys.rhs) <= 1e-10);
        }
    }

    #[test]
    fn reconstruction_of_zero_and_affine() {
        let mesh = unit(2);
        let sys = assemble(&mesh, 1, BcType::Clamped, &LoadSpec::homogeneous(BcType::Clamped), &AssemblyOptions::default())
            .unwrap();
        let zero = reconstruct_field(&sys, &HybridVector::zeros(sys.num_unknowns()));
        assert!(zero.iter().all(|v| v.iter().all(|&c| c == 0.0)));
        let f = |x: Point| 0.3 - x.x + 4.0 * x.y;
        let aff =
            HybridVector::interpolate(&mesh, &sys.dofmap, sys.options.node_set, true, f, |_| Point::new(-1.0, 4.0)).unwrap();
        let rec = reconstruct_field(&sys, &aff);
        let basis = CellBasis::new(3, sys.options.node_set);
        for (c, coef) in rec.iter().enumerate() {
            let map = mesh.cell_map(c);
            for (i, xi) in basis.nodes().iter().enumerate() {
                assert_abs_diff_eq!(coef[i], f(map.to_physical(xi)), epsilon = 1e-10);
            }
        }
    }

    /// On an aligned mesh the line integral along interior faces can be
    /// computed face by face; both routes must agree.
    #[test]
    fn line_source_matches_face_quadrature() {
        let mesh = Mesh::generate_structured(4, Rectangle::new(-1.0, 1.0, -1.0, 1.0), Diagonal::default());
        let k = 1;
        let dofmap = DofMap::build(&mesh, k, BcType::SimplySupported);
        let basis = CellBasis::new(k + 2, NodeSet::Equispaced);
        let density: ScalarFn = Arc::new(|x| (std::f64::consts::PI * x.y).sin());
        let src = LineSource { a: Point::new(0.0, -1.0), b: Point::new(0.0, 1.0), density: density.clone() };
        let mut b1 = vec![0.0; dofmap.total()];
        add_line_source(&mesh, &dofmap, &basis, &src, 12, &mut b1).unwrap();

        let mut b2 = vec![0.0; dofmap.total()];
        let rule = face_quadrature(12).unwrap();
        for rec in mesh.faces() {
            let (a, b) = (mesh.vertices()[rec.endpoints[0]], mesh.vertices()[rec.endpoints[1]]);
            if a.x.abs() > 1e-14 || b.x.abs() > 1e-14 {
                continue;
            }
            let c = rec.cells.0.max(rec.cells.1.unwrap());
            let map = mesh.cell_map(c);
            for (t, w) in rule.points.iter().zip(&rule.weights) {
                let x = a + (b - a) * t.x;
                let gx = density(x) * w * rec.length;
                for (&g, phi) in dofmap.cell_nodes(c).iter().zip(basis.eval_values(&map.to_reference(&x))) {
                    b2[g] += gx * phi;
                }
            }
        }
        for (u, v) in b1.iter().zip(&b2) {
            assert!((u - v).abs() < 1e-11);
        }
        assert!(b1.iter().any(|v| v.abs() > 1e-3));
    }
}
