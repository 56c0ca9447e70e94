//! C⁰ interior-penalty discretization on the continuous `P_ℓ` cell space.
//!
//! Jumps and averages on a face use `n_F` and the cell it points out of
//! (`K₁`): `⟦∂_n v⟧ = ∂_n v|_{K₁} − ∂_n v|_{K₂}`. On boundary faces the jump
//! is the one-sided trace and the average the one-sided value.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::CellBasis;
use crate::error::{Error, Result};
use crate::fe_space::{physical_derivatives, BcType, DofMap};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{cell_quadrature, face_quadrature};
use crate::sparse::Triplets;
use crate::system::{
    add_line_source, cell_load, eliminate, essential_lift, AssemblyOptions, HybridVector, LinearSystem, LoadSpec, Method,
};

/// `ϖ_F = n_∂ (k + 1)²` with `k = ℓ − 2`.
pub fn penalty(n_partial: f64, ell: usize) -> f64 {
    let k = (ell - 2) as f64;
    n_partial * (k + 1.0) * (k + 1.0)
}

/// Faces carrying jump terms: interior faces, plus boundary faces for
/// clamped conditions.
fn active_face(bc: BcType, is_boundary: bool) -> bool {
    !is_boundary || bc == BcType::Clamped
}

/// Normal derivative and second normal derivative of every basis function
/// of `cell` at the physical point `x`.
fn face_traces(mesh: &Mesh, basis: &CellBasis, cell: usize, x: Point, n: Point) -> (Vec<f64>, Vec<f64>) {
    let map = mesh.cell_map(cell);
    let ev = basis.eval(&map.to_reference(&x));
    let (grad, hess) = physical_derivatives(&map, &ev);
    (grad.iter().map(|g| n.dot(g)).collect(), hess.iter().map(|h| n.dot(&(h * n))).collect())
}

/// Assembles the C⁰-IPDG system with cell degree `ell ≥ 2`.
pub fn assemble_ipdg(mesh: &Mesh, ell: usize, bc: BcType, load: &LoadSpec, options: &AssemblyOptions) -> Result<LinearSystem> {
    let start = Instant::now();
    if ell < 2 {
        return Err(Error::Input(format!("C0-IPDG needs cell degree >= 2, got {ell}")));
    }
    load.check(bc)?;
    let k = ell - 2;
    let dofmap = DofMap::build(mesh, k, bc);
    let basis = CellBasis::new(ell, options.node_set);
    let np = basis.dim();
    let n = dofmap.cell_space();
    let varpi = penalty(options.ipdg_penalty, ell);
    let mut warnings = Vec::new();
    if varpi < 1.0 {
        warnings.push(format!("penalty {varpi} is below 1; coercivity is not guaranteed"));
    }

    let stiff_rule = cell_quadrature(2 * ell)?;
    let load_rule = cell_quadrature(options.load_degree(ell))?;
    let evals: Vec<_> = stiff_rule.points.iter().map(|x| basis.eval(x)).collect();
    let cells: Vec<(DMatrix<f64>, Vec<f64>)> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let map = mesh.cell_map(c);
            let jac = map.det.abs();
            let mut g = DMatrix::zeros(np, np);
            for (w, ev) in stiff_rule.weights.iter().zip(&evals) {
                let (_, hess) = physical_derivatives(&map, ev);
                for i in 0..np {
                    for j in 0..np {
                        g[(i, j)] += w * jac * hess[i].dot(&hess[j]);
                    }
                }
            }
            let b = cell_load(&basis, &load_rule, &mesh.cell_vertices(c), &*load.f_reg, load.interface.as_ref());
            (g, b)
        })
        .collect();

    let face_rule = face_quadrature(2 * ell)?;
    let data_rule = face_quadrature(options.load_degree(ell))?;
    // Per face: the index list, the local matrix, and the load contribution.
    type FaceBlock = (Vec<usize>, DMatrix<f64>, Vec<f64>);
    let faces: Vec<Option<FaceBlock>> = mesh
        .faces()
        .par_iter()
        .map(|rec| {
            if !active_face(bc, rec.is_boundary) {
                if let (Some(g2), true) = (&load.g2, rec.is_boundary) {
                    // natural term (g2, ∂_n w) on a boundary face
                    let (a, b) = (mesh.vertices()[rec.endpoints[0]], mesh.vertices()[rec.endpoints[1]]);
                    let c = rec.cells.0;
                    let mut f = vec![0.0; np];
                    for (t, w) in data_rule.points.iter().zip(&data_rule.weights) {
                        let x = a + (b - a) * t.x;
                        let (dn, _) = face_traces(mesh, &basis, c, x, rec.normal);
                        let gw = g2(x, rec.normal) * w * rec.length;
                        for i in 0..np {
                            f[i] += gw * dn[i];
                        }
                    }
                    return Some((dofmap.cell_nodes(c).to_vec(), DMatrix::zeros(np, np), f));
                }
                return None;
            }
            let (a, b) = (mesh.vertices()[rec.endpoints[0]], mesh.vertices()[rec.endpoints[1]]);
            let sigma = varpi / rec.length;
            let (c1, c2) = rec.cells;
            let mut idx = dofmap.cell_nodes(c1).to_vec();
            if let Some(c2) = c2 {
                idx.extend_from_slice(dofmap.cell_nodes(c2));
            }
            let m = idx.len();
            let mut mat = DMatrix::zeros(m, m);
            let mut jump = vec![0.0; m];
            let mut avg = vec![0.0; m];
            for (t, w) in face_rule.points.iter().zip(&face_rule.weights) {
                let x = a + (b - a) * t.x;
                let (dn1, dnn1) = face_traces(mesh, &basis, c1, x, rec.normal);
                match c2 {
                    Some(c2) => {
                        let (dn2, dnn2) = face_traces(mesh, &basis, c2, x, rec.normal);
                        for i in 0..np {
                            jump[i] = dn1[i];
                            jump[np + i] = -dn2[i];
                            avg[i] = 0.5 * dnn1[i];
                            avg[np + i] = 0.5 * dnn2[i];
                        }
                    }
                    None => {
                        jump.copy_from_slice(&dn1);
                        avg.copy_from_slice(&dnn1);
                    }
                }
                let wl = w * rec.length;
                for i in 0..m {
                    for j in 0..m {
                        mat[(i, j)] += wl * (sigma * jump[i] * jump[j] - avg[i] * jump[j] - jump[i] * avg[j]);
                    }
                }
            }
            let mut f = vec![0.0; m];
            if rec.is_boundary {
                // Nitsche data: σ(g1, ∂_n w) − (g1, ∂_nn w)
                let g1 = load.g1.as_ref().expect("checked by LoadSpec::check");
                for (t, w) in data_rule.points.iter().zip(&data_rule.weights) {
                    let x = a + (b - a) * t.x;
                    let (dn, dnn) = face_traces(mesh, &basis, c1, x, rec.normal);
                    let gw = g1(x, rec.normal) * w * rec.length;
                    for i in 0..m {
                        f[i] += gw * (sigma * dn[i] - dnn[i]);
                    }
                }
            }
            Some((idx, mat, f))
        })
        .collect();

    let mut trip = Triplets::new(n);
    let mut rhs = vec![0.0; n];
    for (c, (g, b)) in cells.iter().enumerate() {
        let nodes = dofmap.cell_nodes(c);
        for (i, &gi) in nodes.iter().enumerate() {
            rhs[gi] += b[i];
            for (j, &gj) in nodes.iter().enumerate() {
                trip.push(gi, gj, g[(i, j)]);
            }
        }
    }
    for (idx, mat, f) in faces.iter().flatten() {
        for (i, &gi) in idx.iter().enumerate() {
            rhs[gi] += f[i];
            for (j, &gj) in idx.iter().enumerate() {
                if mat[(i, j)] != 0.0 {
                    trip.push(gi, gj, mat[(i, j)]);
                }
            }
        }
    }
    let full = trip.build();
    if let Some(src) = &load.line_source {
        add_line_source(mesh, &dofmap, &basis, src, options.load_degree(ell), &mut rhs)?;
    }
    let lift = essential_lift(mesh, &dofmap, &basis, load, n, false)?;
    let (matrix, reduced_rhs, free) = eliminate(&full, &rhs, &dofmap.essential()[..n], &lift);
    Ok(LinearSystem {
        method: Method::Ipdg,
        bc,
        dofmap,
        options: *options,
        full_matrix: full,
        full_rhs: rhs,
        matrix,
        rhs: reduced_rhs,
        free,
        lift,
        cells: Vec::new(),
        condensable: false,
        assembly_seconds: start.elapsed().as_secs_f64(),
        warnings,
    })
}

/// `(Σ_F ϖ_F h_F⁻¹ ‖⟦∂_n u_h⟧‖²_F)^{1/2}` over the penalized faces; on
/// clamped boundary faces the jump is `∂_n u_h − g1`.
pub fn jump_seminorm(mesh: &Mesh, sys: &LinearSystem, x: &HybridVector, load: &LoadSpec) -> Result<f64> {
    let ell = sys.dofmap.cell_degree();
    let basis = CellBasis::new(ell, sys.options.node_set);
    let varpi = penalty(sys.options.ipdg_penalty, ell);
    let rule = face_quadrature(2 * ell + 4)?;
    let value_dn = |c: usize, p: Point, n: Point| -> f64 {
        let (dn, _) = face_traces(mesh, &basis, c, p, n);
        sys.dofmap.cell_nodes(c).iter().zip(dn).map(|(&g, d)| x.values[g] * d).sum()
    };
    let total: f64 = mesh
        .faces()
        .par_iter()
        .filter(|rec| active_face(sys.bc, rec.is_boundary))
        .map(|rec| {
            let (a, b) = (mesh.vertices()[rec.endpoints[0]], mesh.vertices()[rec.endpoints[1]]);
            let mut s = 0.0;
            for (t, w) in rule.points.iter().zip(&rule.weights) {
                let p = a + (b - a) * t.x;
                let j = value_dn(rec.cells.0, p, rec.normal)
                    - match rec.cells.1 {
                        Some(c2) => value_dn(c2, p, rec.normal),
                        None => load.g1.as_ref().map_or(0.0, |g| g(p, rec.normal)),
                    };
                s += w * rec.length * j * j;
            }
            varpi / rec.length * s
        })
        .sum();
    Ok(total.sqrt())
}
