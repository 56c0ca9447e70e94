//! Global hybrid degree-of-freedom numbering, reference-element tables, and
//! the elementary projections (Lagrange interpolation on cells, L² projection
//! on faces).
//!
//! Global numbering of the hybrid space for polynomial order `k`
//! (`p = k + 2`):
//!
//! | block            | size                   |
//! |------------------|------------------------|
//! | vertex nodes     | `V`                    |
//! | edge nodes       | `(p - 1) E`            |
//! | cell bubbles     | `(p - 1)(p - 2)/2 · C` |
//! | face unknowns    | `(k + 1) E`            |
//!
//! Edge nodes are numbered from the lower- to the higher-indexed endpoint.
//! Face unknowns are coefficients in the orthonormal face basis, oriented by
//! `n_F`; a cell sees them multiplied by `n_F · n_K`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::Matrix2;

use crate::basis::{CellBasis, FaceBasis, NodeKind, NodeSet, PointEval};
use crate::error::{Error, Result};
use crate::mesh::{AffineMap, Mesh, Point};
use crate::quadrature::{cell_quadrature, face_quadrature, QuadratureRule};

/// Boundary condition type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcType {
    /// Type I: `u` and `∂_n u` prescribed.
    Clamped,
    /// Type II: `u` prescribed, `∂_nn u` natural.
    SimplySupported,
}

impl fmt::Display for BcType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BcType::Clamped => "I",
            BcType::SimplySupported => "II",
        })
    }
}

impl FromStr for BcType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "i" | "1" | "clamped" => Ok(BcType::Clamped),
            "II" | "ii" | "2" | "simply-supported" | "simply_supported" => Ok(BcType::SimplySupported),
            _ => Err(Error::Input(format!("unknown boundary condition '{s}' (expected I or II)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DofMap {
    k: usize,
    bc: BcType,
    num_vertices: usize,
    num_faces: usize,
    num_cells: usize,
    nodes_per_cell: usize,
    bubbles_per_cell: usize,
    cell_space: usize,
    /// Global index of each local Lagrange node, `nodes_per_cell` per cell.
    cell_nodes: Vec<usize>,
    face_signs: Vec<[f64; 3]>,
    face_ids: Vec<[usize; 3]>,
    essential: Vec<bool>,
}

impl DofMap {
    pub fn build(mesh: &Mesh, k: usize, bc: BcType) -> Self {
        let p = k + 2;
        let kinds = CellBasis::new(p, NodeSet::Equispaced).kinds().to_vec();
        let (nv, ne, nc) = (mesh.num_vertices(), mesh.num_faces(), mesh.num_cells());
        let bubbles_per_cell = if p >= 3 { (p - 1) * (p - 2) / 2 } else { 0 };
        let edge_base = nv;
        let bubble_base = nv + (p - 1) * ne;
        let cell_space = bubble_base + bubbles_per_cell * nc;
        let total = cell_space + (k + 1) * ne;

        let mut cell_nodes = Vec::with_capacity(nc * kinds.len());
        let mut face_signs = Vec::with_capacity(nc);
        let mut face_ids = Vec::with_capacity(nc);
        for c in 0..nc {
            let verts = mesh.cells()[c];
            let cf = mesh.cell_faces(c);
            for kind in &kinds {
                let g = match *kind {
                    NodeKind::Vertex(v) => verts[v],
                    NodeKind::Edge { edge, index } => {
                        let f = cf[edge].face;
                        let m = if cf[edge].forward { index } else { p - index };
                        edge_base + f * (p - 1) + (m - 1)
                    }
                    NodeKind::Interior(i) => bubble_base + c * bubbles_per_cell + i,
                };
                cell_nodes.push(g);
            }
            face_signs.push([cf[0].sign, cf[1].sign, cf[2].sign]);
            face_ids.push([cf[0].face, cf[1].face, cf[2].face]);
        }

        let mut essential = vec![false; total];
        let boundary_vertex = mesh.is_boundary_vertex();
        for (v, &b) in boundary_vertex.iter().enumerate() {
            essential[v] = b;
        }
        for (f, rec) in mesh.faces().iter().enumerate() {
            if rec.is_boundary {
                for m in 0..p - 1 {
                    essential[edge_base + f * (p - 1) + m] = true;
                }
                if bc == BcType::Clamped {
                    for j in 0..=k {
                        essential[cell_space + f * (k + 1) + j] = true;
                    }
                }
            }
        }

        Self {
            k,
            bc,
            num_vertices: nv,
            num_faces: ne,
            num_cells: nc,
            nodes_per_cell: kinds.len(),
            bubbles_per_cell,
            cell_space,
            cell_nodes,
            face_signs,
            face_ids,
            essential,
        }
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn cell_degree(&self) -> usize {
        self.k + 2
    }

    pub fn bc(&self) -> BcType {
        self.bc
    }

    pub fn total(&self) -> usize {
        self.essential.len()
    }

    /// Size of the continuous cell space (vertex, edge, and bubble nodes).
    pub fn cell_space(&self) -> usize {
        self.cell_space
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.nodes_per_cell
    }

    pub fn face_dofs_per_face(&self) -> usize {
        self.k + 1
    }

    /// Local hybrid size: cell nodes plus three faces.
    pub fn local_size(&self) -> usize {
        self.nodes_per_cell + 3 * (self.k + 1)
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn cell_nodes(&self, cell: usize) -> &[usize] {
        &self.cell_nodes[cell * self.nodes_per_cell..(cell + 1) * self.nodes_per_cell]
    }

    pub fn face_dof(&self, face: usize, j: usize) -> usize {
        self.cell_space + face * (self.k + 1) + j
    }

    /// Global indices and signs for the local hybrid vector of `cell`.
    pub fn hybrid_gather(&self, cell: usize) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self.cell_nodes(cell).iter().map(|&g| (g, 1.0)).collect();
        for e in 0..3 {
            for j in 0..=self.k {
                out.push((self.face_dof(self.face_ids[cell][e], j), self.face_signs[cell][e]));
            }
        }
        out
    }

    pub fn face_sign(&self, cell: usize, local_edge: usize) -> f64 {
        self.face_signs[cell][local_edge]
    }

    pub fn is_essential(&self, dof: usize) -> bool {
        self.essential[dof]
    }

    pub fn essential(&self) -> &[bool] {
        &self.essential
    }

    /// Global indices of the interior bubble nodes of `cell`.
    pub fn bubbles(&self, cell: usize) -> Range<usize> {
        let base = self.num_vertices + (self.cell_degree() - 1) * self.num_faces + cell * self.bubbles_per_cell;
        base..base + self.bubbles_per_cell
    }

    pub fn bubbles_per_cell(&self) -> usize {
        self.bubbles_per_cell
    }

    pub fn has_condensable(&self) -> bool {
        self.bubbles_per_cell > 0
    }

    /// Closed-form count `V + (p-1)E + (p-1)(p-2)/2·C + (k+1)E`.
    pub fn expected_total(mesh: &Mesh, k: usize) -> usize {
        let p = k + 2;
        mesh.num_vertices()
            + (p - 1) * mesh.num_faces()
            + (p - 1) * (p - 2) / 2 * mesh.num_cells()
            + (k + 1) * mesh.num_faces()
    }
}

/// Reference-element data shared by every cell for one order `k`.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub k: usize,
    pub basis: CellBasis,
    pub face_basis: FaceBasis,
    pub cell_rule: QuadratureRule,
    pub cell_evals: Vec<PointEval>,
    /// Rule on `[0, 1]`.
    pub face_rule: QuadratureRule,
    /// Evaluations at the face rule points along each local edge, in local
    /// edge direction.
    pub face_evals: [Vec<PointEval>; 3],
}

pub(crate) fn edge_point(e: usize, s: f64) -> Point {
    let v = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
    v[e] + (v[(e + 1) % 3] - v[e]) * s
}

impl ReferenceElement {
    /// Cell rule exact to `2p`; face rule exact to `2p`.
    pub fn new(k: usize, node_set: NodeSet) -> Result<Self> {
        let p = k + 2;
        let basis = CellBasis::new(p, node_set);
        let cell_rule = cell_quadrature(2 * p)?;
        let face_rule = face_quadrature(2 * p)?;
        let cell_evals = cell_rule.points.iter().map(|x| basis.eval(x)).collect();
        let face_evals =
            std::array::from_fn(|e| face_rule.points.iter().map(|s| basis.eval(&edge_point(e, s.x))).collect());
        Ok(Self { k, basis, face_basis: FaceBasis::new(k), cell_rule, cell_evals, face_rule, face_evals })
    }

    pub fn degree(&self) -> usize {
        self.k + 2
    }
}

/// Physical gradient and Hessian from reference ones under an affine map.
pub(crate) fn physical_derivatives(map: &AffineMap, eval: &PointEval) -> (Vec<Point>, Vec<Matrix2<f64>>) {
    let jit = map.inverse.transpose();
    let grads = eval.grad.iter().map(|g| jit * g).collect();
    let hess = eval.hess.iter().map(|h| jit * h * map.inverse).collect();
    (grads, hess)
}

/// Nodal values of the degree-`p` Lagrange interpolant of `v` on a cell.
pub fn lagrange_interpolate_cell(basis: &CellBasis, map: &AffineMap, v: impl Fn(Point) -> f64) -> Vec<f64> {
    basis.nodes().iter().map(|xi| v(map.to_physical(xi))).collect()
}

/// Coefficients of the L²(F) projection of `g` onto `P_k(F)` for the face
/// from `a` to `b` (parameter `s` runs from `a` to `b`), using a Gauss rule
/// exact to degree `q`.
pub fn l2_project_face(a: Point, b: Point, g: impl Fn(Point) -> f64, k: usize, q: usize) -> Result<Vec<f64>> {
    let rule = face_quadrature(q.max(2 * k))?;
    let len = (b - a).norm();
    let fb = FaceBasis::new(k);
    let mut out = vec![0.0; k + 1];
    for (s, w) in rule.points.iter().zip(&rule.weights) {
        let gv = g(a + (b - a) * s.x);
        for (o, psi) in out.iter_mut().zip(fb.eval(s.x, len)) {
            *o += w * len * gv * psi;
        }
    }
    Ok(out)
}

/// Value of a face polynomial with coefficients `coef` at parameter `s`.
pub fn eval_face(coef: &[f64], s: f64, length: f64) -> f64 {
    FaceBasis::new(coef.len() - 1).eval(s, length).iter().zip(coef).map(|(p, c)| p * c).sum()
}
