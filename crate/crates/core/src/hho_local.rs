//! Per-cell HHO operators: reduction, reconstruction, stabilization, and the
//! local stiffness `A_K = RᵀGR + S`.
//!
//! A local hybrid vector is ordered as the `dim P_{k+2}` cell nodes followed
//! by the `k + 1` face coefficients of local edges 0, 1, 2. Face
//! coefficients refer to the orthonormal face basis parameterized from the
//! lower- to the higher-indexed global endpoint and are already multiplied
//! by `n_F · n_K`, so they describe `n_K · ∇v`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fe_space::{lagrange_interpolate_cell, physical_derivatives, ReferenceElement};
use crate::mesh::{AffineMap, Mesh, Point};
use crate::quadrature::face_quadrature;

/// Scaling of the stabilization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum WeightMode {
    /// `h_K⁻¹`.
    HInv,
    /// `(k + 1)² h_K⁻¹`.
    #[default]
    WeightedK,
}

impl WeightMode {
    pub fn weight(self, k: usize, diameter: f64) -> f64 {
        match self {
            WeightMode::HInv => 1.0 / diameter,
            WeightMode::WeightedK => ((k + 1) * (k + 1)) as f64 / diameter,
        }
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMode::HInv => "h_inv",
            WeightMode::WeightedK => "weighted_k",
        })
    }
}

impl FromStr for WeightMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h_inv" => Ok(WeightMode::HInv),
            "weighted_k" => Ok(WeightMode::WeightedK),
            _ => Err(Error::Input(format!("unknown weight mode '{s}' (expected h_inv or weighted_k)"))),
        }
    }
}

/// Local hybrid data `(v_K, γ_∂K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridLocal {
    pub v: Vec<f64>,
    /// `3 (k + 1)` coefficients, edge by edge.
    pub gamma: Vec<f64>,
}

impl HybridLocal {
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.v.len() + self.gamma.len(), self.v.iter().chain(&self.gamma).copied())
    }
}

/// Geometry of one cell as needed by the local operators.
#[derive(Debug, Clone, Copy)]
pub struct LocalCell {
    pub vertices: [Point; 3],
    /// Per local edge: does the edge run from the lower to the higher
    /// global endpoint?
    pub forward: [bool; 3],
}

impl LocalCell {
    pub fn from_mesh(mesh: &Mesh, cell: usize) -> Self {
        let cf = mesh.cell_faces(cell);
        Self { vertices: mesh.cell_vertices(cell), forward: [cf[0].forward, cf[1].forward, cf[2].forward] }
    }

    /// A free-standing triangle whose edges are all parameterized in local
    /// direction.
    pub fn standalone(vertices: [Point; 3]) -> Self {
        Self { vertices, forward: [true; 3] }
    }

    pub fn map(&self) -> AffineMap {
        AffineMap::from_vertices(&self.vertices)
    }

    pub fn diameter(&self) -> f64 {
        (0..3).map(|e| self.edge_length(e)).fold(0.0, f64::max)
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        0.5 * (v[1] - v[0]).perp(&(v[2] - v[0]))
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        (self.vertices[(e + 1) % 3] - self.vertices[e]).norm()
    }

    pub fn normal(&self, e: usize) -> Point {
        let t = self.vertices[(e + 1) % 3] - self.vertices[e];
        Point::new(t.y, -t.x) / t.norm()
    }

    /// Face-basis parameter of the point at local edge parameter `t`.
    pub fn face_parameter(&self, e: usize, t: f64) -> f64 {
        if self.forward[e] { t } else { 1.0 - t }
    }
}

/// Reconstruction, stabilization, and Hessian Gram of one cell.
#[derive(Debug, Clone)]
pub struct LocalOperator {
    pub cell: usize,
    /// `dim P_{k+2} × n_loc`.
    pub r: DMatrix<f64>,
    /// `n_loc × n_loc`.
    pub s: DMatrix<f64>,
    /// Stacked `√w D_F`, so that `S = DᵀD`.
    pub d: DMatrix<f64>,
    /// `(∇²φ_i, ∇²φ_j)_K`.
    pub g: DMatrix<f64>,
    pub weight: f64,
}

impl LocalOperator {
    pub fn build(
        cell_index: usize,
        cell: &LocalCell,
        reference: &ReferenceElement,
        weight_mode: WeightMode,
    ) -> Result<Self> {
        let k = reference.k;
        let np = reference.basis.dim();
        let nf = k + 1;
        let nloc = np + 3 * nf;
        let map = cell.map();
        let jac = map.det.abs();
        let h = cell.diameter();

        let mut g: DMatrix<f64> = DMatrix::zeros(np, np);
        let mut moments: DMatrix<f64> = DMatrix::zeros(3, np);
        let centroid = (cell.vertices[0] + cell.vertices[1] + cell.vertices[2]) / 3.0;
        for ((xi, w), ev) in reference.cell_rule.points.iter().zip(&reference.cell_rule.weights).zip(&reference.cell_evals) {
            let wq = w * jac;
            let (_, hess) = physical_derivatives(&map, ev);
            for i in 0..np {
                for j in i..np {
                    let v = wq * hess[i].dot(&hess[j]);
                    g[(i, j)] += v;
                }
            }
            let x = map.to_physical(xi);
            let xi_fns = [1.0, (x.x - centroid.x) / h, (x.y - centroid.y) / h];
            for (m, xf) in xi_fns.iter().enumerate() {
                for j in 0..np {
                    moments[(m, j)] += wq * xf * ev.value[j];
                }
            }
        }
        for i in 0..np {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }

        // Right-hand side of the reconstruction problem and face projections
        // P_F[m, j] = (∂_n φ_j, ψ_m)_F.
        let mut rhs = DMatrix::zeros(np, nloc);
        rhs.view_mut((0, 0), (np, np)).copy_from(&g);
        let weight = weight_mode.weight(k, h);
        let sw = weight.sqrt();
        let mut dstack = DMatrix::zeros(3 * nf, nloc);
        for e in 0..3 {
            let len = cell.edge_length(e);
            let n = cell.normal(e);
            let mut proj = DMatrix::zeros(nf, np);
            for ((t, w), ev) in
                reference.face_rule.points.iter().zip(&reference.face_rule.weights).zip(&reference.face_evals[e])
            {
                let wq = w * len;
                let psi = reference.face_basis.eval(cell.face_parameter(e, t.x), len);
                let (grad, hess) = physical_derivatives(&map, ev);
                let dn: Vec<f64> = grad.iter().map(|gr| n.dot(gr)).collect();
                let dnn: Vec<f64> = hess.iter().map(|hs| n.dot(&(hs * n))).collect();
                for i in 0..np {
                    let a = wq * dnn[i];
                    for j in 0..np {
                        rhs[(i, j)] -= a * dn[j];
                    }
                    for m in 0..nf {
                        rhs[(i, np + e * nf + m)] += a * psi[m];
                    }
                }
                for m in 0..nf {
                    for j in 0..np {
                        proj[(m, j)] += wq * psi[m] * dn[j];
                    }
                }
            }
            // D_F = [-P_F | I on edge e]
            dstack.view_mut((e * nf, 0), (nf, np)).copy_from(&(-&proj * sw));
            for m in 0..nf {
                dstack[(e * nf + m, np + e * nf + m)] = sw;
            }
        }
        let s = dstack.transpose() * &dstack;

        // Saddle point [G Mᵀ; M 0] with M scaled to the magnitude of G.
        let scale = g.amax() / moments.amax();
        let mut kkt: DMatrix<f64> = DMatrix::zeros(np + 3, np + 3);
        kkt.view_mut((0, 0), (np, np)).copy_from(&g);
        let ms = &moments * scale;
        kkt.view_mut((np, 0), (3, np)).copy_from(&ms);
        kkt.view_mut((0, np), (np, 3)).copy_from(&ms.transpose());
        let mut full_rhs = DMatrix::zeros(np + 3, nloc);
        full_rhs.view_mut((0, 0), (np, nloc)).copy_from(&rhs);
        full_rhs.view_mut((np, 0), (3, np)).copy_from(&ms);
        let sol = kkt
            .full_piv_lu()
            .solve(&full_rhs)
            .ok_or(Error::SingularLocal { cell: cell_index, what: "reconstruction saddle point" })?;
        let r = sol.rows(0, np).into_owned();

        Ok(Self { cell: cell_index, r, s, d: dstack, g, weight })
    }

    /// `A_K = RᵀGR + S`, symmetrized.
    pub fn stiffness(&self) -> DMatrix<f64> {
        let a = self.r.transpose() * &self.g * &self.r + &self.s;
        (&a + a.transpose()) * 0.5
    }

    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        let rx = &self.r * x;
        (rx.transpose() * &self.g * &rx)[(0, 0)] + self.stabilization_energy(x)
    }

    /// `‖Dx‖²`, free of the cancellation in `xᵀSx`.
    pub fn stabilization_energy(&self, x: &DVector<f64>) -> f64 {
        (&self.d * x).norm_squared()
    }

    pub fn reconstruct(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.r * x
    }
}

/// `Î_K(v) = (Lagrange interpolant of v, Π^k(n_K · ∇v) facewise)`.
pub fn reduce(
    cell: &LocalCell,
    reference: &ReferenceElement,
    v: impl Fn(Point) -> f64,
    grad: impl Fn(Point) -> Point,
) -> Result<HybridLocal> {
    let k = reference.k;
    let map = cell.map();
    let values = lagrange_interpolate_cell(&reference.basis, &map, v);
    let rule = face_quadrature(2 * (k + 2) + 10)?;
    let mut gamma = vec![0.0; 3 * (k + 1)];
    for e in 0..3 {
        let (a, b) = (cell.vertices[e], cell.vertices[(e + 1) % 3]);
        let len = cell.edge_length(e);
        let n = cell.normal(e);
        for (t, w) in rule.points.iter().zip(&rule.weights) {
            let x = a + (b - a) * t.x;
            let dn = n.dot(&grad(x));
            let psi = reference.face_basis.eval(cell.face_parameter(e, t.x), len);
            for (m, p) in psi.iter().enumerate() {
                gamma[e * (k + 1) + m] += w * len * dn * p;
            }
        }
    }
    Ok(HybridLocal { v: values, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::NodeSet;
    use approx::assert_abs_diff_eq;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_triangle() -> LocalCell {
        LocalCell::standalone([Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)])
    }

    fn random_triangles(n: usize, seed: u64) -> Vec<LocalCell> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        while out.len() < n {
            let v: [Point; 3] = std::array::from_fn(|_| Point::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)));
            let area = 0.5 * (v[1] - v[0]).perp(&(v[2] - v[0]));
            let h = (0..3).map(|e| (v[(e + 1) % 3] - v[e]).norm()).fold(0.0, f64::max);
            // keep shape-regular triangles, oriented counter-clockwise
            if area.abs() > 0.1 * h * h {
                let v = if area > 0.0 { v } else { [v[0], v[2], v[1]] };
                let forward = std::array::from_fn(|_| rng.random_bool(0.5));
                out.push(LocalCell { vertices: v, forward });
            }
        }
        out
    }

    /// Monomial `x^a y^b` with gradient.
    fn monomial(a: i32, b: i32) -> (impl Fn(Point) -> f64, impl Fn(Point) -> Point) {
        let pw = |x: f64, e: i32| if e < 0 { 0.0 } else { x.powi(e) };
        (move |x: Point| pw(x.x, a) * pw(x.y, b), move |x: Point| {
            Point::new(a as f64 * pw(x.x, a - 1) * pw(x.y, b), b as f64 * pw(x.x, a) * pw(x.y, b - 1))
        })
    }

    #[test]
    fn reduce_constant_and_linear() {
        let re = ReferenceElement::new(0, NodeSet::Equispaced).unwrap();
        let cell = reference_triangle();
        let c = reduce(&cell, &re, |_| 2.5, |_| Point::zeros()).unwrap();
        assert!(c.v.iter().all(|&v| (v - 2.5).abs() < 1e-15));
        assert!(c.gamma.iter().all(|&g| g.abs() < 1e-15));

        // face data of v = x: n_K,x on each face, as function values
        let r = reduce(&cell, &re, |x| x.x, |_| Point::new(1.0, 0.0)).unwrap();
        let expected = [0.0, std::f64::consts::FRAC_1_SQRT_2, -1.0];
        for e in 0..3 {
            let len = cell.edge_length(e);
            let val = r.gamma[e] * re.face_basis.eval(0.3, len)[0];
            assert_abs_diff_eq!(val, expected[e], epsilon = 1e-14);
        }
    }

    #[test]
    fn reduce_sine_face_moments() {
        let re = ReferenceElement::new(1, NodeSet::Equispaced).unwrap();
        let cell = reference_triangle();
        let pi = std::f64::consts::PI;
        let r = reduce(&cell, &re, |x| (pi * x.x).sin(), |x| Point::new(pi * (pi * x.x).cos(), 0.0)).unwrap();
        // face y = 0 has normal (0, -1): zero data
        assert_abs_diff_eq!(r.gamma[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.gamma[1], 0.0, epsilon = 1e-14);
        // face x = 0 (edge 2, normal (-1, 0)): n·∇v = -π, constant
        let len = cell.edge_length(2);
        let psi = re.face_basis.eval(0.4, len);
        assert_abs_diff_eq!(r.gamma[4] * psi[0], -pi, epsilon = 1e-12);
        assert_abs_diff_eq!(r.gamma[5], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reconstruction_exact_on_polynomials() {
        for k in 0..=4 {
            let re = ReferenceElement::new(k, NodeSet::Equispaced).unwrap();
            let p = k + 2;
            for (t, cell) in random_triangles(20, 7 + k as u64).iter().enumerate() {
                let op = LocalOperator::build(t, cell, &re, WeightMode::WeightedK).unwrap();
                for a in 0..=p as i32 {
                    for b in 0..=(p as i32 - a) {
                        let (v, g) = monomial(a, b);
                        let x = reduce(cell, &re, &v, &g).unwrap().to_vector();
                        let rx = op.reconstruct(&x);
                        let scale = x.amax().max(1.0);
                        for i in 0..re.basis.dim() {
                            assert!((rx[i] - x[i]).abs() <= 1e-9 * scale, "k={k} a={a} b={b}");
                        }
                        assert!(op.stabilization_energy(&x) <= 1e-10 * scale * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let re = ReferenceElement::new(2, NodeSet::Equispaced).unwrap();
        let op = LocalOperator::build(0, &reference_triangle(), &re, WeightMode::WeightedK).unwrap();
        let x = DVector::zeros(op.r.ncols());
        assert!(op.reconstruct(&x).iter().all(|&v| v == 0.0));
    }

    /// Independent oracle for `v_K = x², γ = 0`, k = 0: the defining
    /// equations posed as one dense least-squares problem over the
    /// monomial basis of `P_2`.
    #[test]
    fn reconstruction_residual_oracle() {
        let re = ReferenceElement::new(0, NodeSet::Equispaced).unwrap();
        let cell = reference_triangle();
        let op = LocalOperator::build(0, &cell, &re, WeightMode::WeightedK).unwrap();
        let (v, g) = monomial(2, 0);
        let mut x = reduce(&cell, &re, v, g).unwrap().to_vector();
        for i in 6..9 {
            x[i] = 0.0;
        }
        let r = op.reconstruct(&x);
        // r as a polynomial: sample at the nodes, fit monomials
        let mono = |q: Point| [1.0, q.x, q.y, q.x * q.x, q.x * q.y, q.y * q.y];
        let nodes = re.basis.nodes();
        let vmat = DMatrix::from_fn(6, 6, |i, j| mono(nodes[i])[j]);
        let c = vmat.lu().solve(&r).unwrap();
        // (∇²r, ∇²w) for w ∈ {x², xy, y²}: Hessian of r is constant
        let area = 0.5;
        let hr = [2.0 * c[3], c[4], 2.0 * c[5]];
        // rhs: (∇²x², ∇²w)_K - (∂_n x², ∂_nn w)_∂K with γ = 0
        let edges = [(Point::new(0.0, 0.0), Point::new(1.0, 0.0)), (Point::new(1.0, 0.0), Point::new(0.0, 1.0)), (Point::new(0.0, 1.0), Point::new(0.0, 0.0))];
        let hw = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        for hwi in hw {
            let lhs = area * (hr[0] * hwi[0] + 2.0 * hr[1] * hwi[1] + hr[2] * hwi[2]);
            let mut rhs = area * (2.0 * hwi[0]);
            for (a, b) in edges {
                let t = b - a;
                let len = t.norm();
                let n = Point::new(t.y, -t.x) / len;
                let dnn = n.x * n.x * hwi[0] + 2.0 * n.x * n.y * hwi[1] + n.y * n.y * hwi[2];
                // ∫ ∂_n x² = ∫ 2 x n_x ds, x linear along the edge
                let mean_x = 0.5 * (a.x + b.x);
                rhs -= dnn * 2.0 * n.x * mean_x * len;
            }
            assert!((lhs - rhs).abs() < 1e-11, "{lhs} vs {rhs}");
        }
        // P1 moments match those of x²: ∫1, ∫x, ∫y
        let moments_x2 = [1.0 / 12.0, 1.0 / 20.0, 1.0 / 60.0];
        let int_mono = |a: u32, b: u32| {
            let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
            f(a) * f(b) / f(a + b + 2)
        };
        let exps = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];
        for (m, (xa, xb)) in [(0, 0), (1, 0), (0, 1)].iter().enumerate() {
            let val: f64 = exps.iter().enumerate().map(|(j, (a, b))| c[j] * int_mono(a + xa, b + xb)).sum();
            assert_abs_diff_eq!(val, moments_x2[m], epsilon = 1e-12);
        }
    }

    #[test]
    fn stabilization_hand_values() {
        let re = ReferenceElement::new(0, NodeSet::Equispaced).unwrap();
        let cell = reference_triangle();
        // γ ≡ 1 on all faces as a function: coefficient sqrt(L)
        let mut x = DVector::zeros(9);
        for e in 0..3 {
            x[6 + e] = cell.edge_length(e).sqrt();
        }
        let op = LocalOperator::build(0, &cell, &re, WeightMode::HInv).unwrap();
        assert_abs_diff_eq!(op.stabilization_energy(&x), 1.0 + 2f64.sqrt(), epsilon = 1e-13);
        let re2 = ReferenceElement::new(2, NodeSet::Equispaced).unwrap();
        let mut x2 = DVector::zeros(re2.basis.dim() + 9);
        for e in 0..3 {
            x2[re2.basis.dim() + 3 * e] = cell.edge_length(e).sqrt();
        }
        let a = LocalOperator::build(0, &cell, &re2, WeightMode::HInv).unwrap().stabilization_energy(&x2);
        let b = LocalOperator::build(0, &cell, &re2, WeightMode::WeightedK).unwrap().stabilization_energy(&x2);
        assert_abs_diff_eq!(a, 1.0 + 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(b, 9.0 * a, epsilon = 1e-11);
    }

    #[test]
    fn energy_of_quadratic() {
        let re = ReferenceElement::new(0, NodeSet::Equispaced).unwrap();
        let cell = reference_triangle();
        let op = LocalOperator::build(0, &cell, &re, WeightMode::WeightedK).unwrap();
        let (v, g) = monomial(2, 0);
        let x = reduce(&cell, &re, v, g).unwrap().to_vector();
        assert_abs_diff_eq!(op.energy(&x), 2.0, epsilon = 1e-9);
        let (v, g) = monomial(1, 0);
        let x = reduce(&cell, &re, |q| 1.0 + v(q) - 2.0 * q.y, |q| g(q) - Point::new(0.0, 2.0)).unwrap().to_vector();
        assert!(op.energy(&x).abs() < 1e-10);
    }

    #[test]
    fn stiffness_null_space_is_affine() {
        for k in 0..=3 {
            let re = ReferenceElement::new(k, NodeSet::Equispaced).unwrap();
            for (t, cell) in random_triangles(20, 100 + k as u64).iter().enumerate() {
                let op = LocalOperator::build(t, cell, &re, WeightMode::WeightedK).unwrap();
                let a = op.stiffness();
                let norm = a.norm();
                assert!((&a - a.transpose()).amax() <= 1e-12 * norm);
                let eig = SymmetricEigen::new(a.clone());
                let small = eig.eigenvalues.iter().filter(|&&l| l.abs() < 1e-10 * norm).count();
                assert_eq!(small, 3, "k={k} triangle {t}");
                assert!(eig.eigenvalues.min() >= -1e-10 * norm);
                for (v, g) in [monomial(0, 0), monomial(1, 0), monomial(0, 1)] {
                    let x = reduce(cell, &re, v, g).unwrap().to_vector();
                    assert!((&a * &x).amax() <= 1e-10 * norm * x.amax());
                }
            }
        }
    }

    #[test]
    fn energy_invariant_under_rigid_motion() {
        let re = ReferenceElement::new(2, NodeSet::Equispaced).unwrap();
        let tri = [Point::new(0.1, 0.2), Point::new(0.9, 0.35), Point::new(0.3, 0.8)];
        let (th, shift) = (0.7f64, Point::new(3.0, -1.5));
        let rot = nalgebra::Rotation2::new(th);
        let moved = tri.map(|p| rot * p + shift);
        let u = |x: Point| (x.x * 1.3).sin() * (0.4 * x.y).exp();
        let gu = |x: Point| Point::new(1.3 * (x.x * 1.3).cos() * (0.4 * x.y).exp(), 0.4 * u(x));
        let back = |x: Point| rot.inverse() * (x - shift);
        let e1 = {
            let c = LocalCell::standalone(tri);
            let op = LocalOperator::build(0, &c, &re, WeightMode::WeightedK).unwrap();
            op.energy(&reduce(&c, &re, u, gu).unwrap().to_vector())
        };
        let e2 = {
            let c = LocalCell::standalone(moved);
            let op = LocalOperator::build(0, &c, &re, WeightMode::WeightedK).unwrap();
            op.energy(&reduce(&c, &re, |x| u(back(x)), |x| rot * gu(back(x))).unwrap().to_vector())
        };
        assert_abs_diff_eq!(e1, e2, epsilon = 1e-11 * e1.abs().max(1.0));
    }

    /// Generalized eigenvalues of `A_K` against the energy seminorm Gram
    /// (broken Hessian plus unprojected `h⁻¹` face mismatch) stay in a
    /// bracket independent of the cell size.
    #[test]
    fn norm_equivalence_bracket_is_size_independent() {
        let k = 1;
        let re = ReferenceElement::new(k, NodeSet::Equispaced).unwrap();
        let np = re.basis.dim();
        let nf = k + 1;
        let base = [Point::new(0.0, 0.0), Point::new(1.0, 0.1), Point::new(0.3, 0.9)];
        let mut brackets = Vec::new();
        for s in [1.0, 0.25, 1.0 / 16.0] {
            let cell = LocalCell::standalone(base.map(|p| p * s));
            let op = LocalOperator::build(0, &cell, &re, WeightMode::HInv).unwrap();
            let a = op.stiffness();
            // seminorm Gram
            let h = cell.diameter();
            let map = cell.map();
            let mut m = DMatrix::zeros(np + 3 * nf, np + 3 * nf);
            m.view_mut((0, 0), (np, np)).copy_from(&op.g);
            let rule = face_quadrature(4 * (k + 2)).unwrap();
            for e in 0..3 {
                let (p0, p1) = (cell.vertices[e], cell.vertices[(e + 1) % 3]);
                let len = cell.edge_length(e);
                let n = cell.normal(e);
                for (t, w) in rule.points.iter().zip(&rule.weights) {
                    let xi = map.to_reference(&(p0 + (p1 - p0) * t.x));
                    let (grad, _) = physical_derivatives(&map, &re.basis.eval(&xi));
                    let psi = re.face_basis.eval(t.x, len);
                    let mut row = DVector::zeros(np + 3 * nf);
                    for j in 0..np {
                        row[j] = -n.dot(&grad[j]);
                    }
                    for mm in 0..nf {
                        row[np + e * nf + mm] = psi[mm];
                    }
                    m += &row * row.transpose() * (w * len / h);
                }
            }
            // restrict to the orthogonal complement of the common kernel
            let eig = SymmetricEigen::new(m.clone());
            let tol = 1e-10 * eig.eigenvalues.amax();
            let cols: Vec<usize> = (0..m.nrows()).filter(|&i| eig.eigenvalues[i] > tol).collect();
            let q = DMatrix::from_fn(m.nrows(), cols.len(), |i, j| {
                eig.eigenvectors[(i, cols[j])] / eig.eigenvalues[cols[j]].sqrt()
            });
            let ev = SymmetricEigen::new(q.transpose() * a * q).eigenvalues;
            brackets.push((ev.min(), ev.max()));
        }
        for &(lo, hi) in &brackets {
            assert!(lo > 1e-3 && hi < 1e3, "{lo} {hi}");
            assert_abs_diff_eq!(lo, brackets[0].0, epsilon = 1e-6 * brackets[0].0);
            assert_abs_diff_eq!(hi, brackets[0].1, epsilon = 1e-6 * brackets[0].1);
        }
    }
}
