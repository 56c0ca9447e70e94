//! Nodal Lagrange bases on the reference triangle and orthonormal Legendre
//! bases on faces.
//!
//! The reference triangle has vertices `(0,0), (1,0), (0,1)`. Lagrange nodes
//! are listed vertices first, then the `p - 1` interior nodes of each local
//! edge (edge `e` runs from local vertex `e` to `(e + 1) % 3`), then the
//! interior nodes. The nodal functions are expanded in the total-degree
//! tensor Legendre family `P_a(2ξ - 1) P_b(2η - 1)`, `a + b ≤ p`, which keeps
//! the Vandermonde system well conditioned for the degrees used here.

use nalgebra::{DMatrix, Matrix2};

use crate::mesh::Point;

/// Placement of the Lagrange nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeSet {
    /// Principal lattice.
    #[default]
    Equispaced,
    /// Warp-and-blend nodes (Gauss–Lobatto distribution on edges).
    Warped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Vertex(usize),
    /// `index` in `1..p` counts lattice steps from the edge's start vertex.
    Edge { edge: usize, index: usize },
    Interior(usize),
}

/// Values, gradients and Hessians of all basis functions at one point.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub value: Vec<f64>,
    pub grad: Vec<Point>,
    pub hess: Vec<Matrix2<f64>>,
}

/// 1D Legendre values and first two derivatives at `t ∈ [-1, 1]`.
fn legendre_with_derivatives(n: usize, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; n + 1];
    let mut dp = vec![0.0; n + 1];
    let mut ddp = vec![0.0; n + 1];
    p[0] = 1.0;
    if n >= 1 {
        p[1] = t;
        dp[1] = 1.0;
    }
    for j in 1..n {
        let jf = j as f64;
        p[j + 1] = ((2.0 * jf + 1.0) * t * p[j] - jf * p[j - 1]) / (jf + 1.0);
        dp[j + 1] = dp[j - 1] + (2.0 * jf + 1.0) * p[j];
        ddp[j + 1] = ddp[j - 1] + (2.0 * jf + 1.0) * dp[j];
    }
    (p, dp, ddp)
}

pub fn dim_p(p: usize) -> usize {
    (p + 1) * (p + 2) / 2
}

#[derive(Debug, Clone)]
pub struct CellBasis {
    degree: usize,
    node_set: NodeSet,
    nodes: Vec<Point>,
    kinds: Vec<NodeKind>,
    /// Exponent pairs of the expansion family.
    modes: Vec<(usize, usize)>,
    /// `coeffs[(j, i)]`: weight of mode `j` in nodal function `i`.
    coeffs: DMatrix<f64>,
}

impl CellBasis {
    pub fn new(degree: usize, node_set: NodeSet) -> Self {
        assert!(degree >= 1, "Lagrange basis needs degree >= 1");
        let p = degree;
        let mut lattice: Vec<([usize; 3], NodeKind)> = Vec::with_capacity(dim_p(p));
        let corner = |v: usize| {
            let mut b = [0; 3];
            b[v] = p;
            b
        };
        for v in 0..3 {
            lattice.push((corner(v), NodeKind::Vertex(v)));
        }
        for e in 0..3 {
            let (a, b) = (e, (e + 1) % 3);
            for m in 1..p {
                let mut bary = [0; 3];
                bary[a] = p - m;
                bary[b] = m;
                lattice.push((bary, NodeKind::Edge { edge: e, index: m }));
            }
        }
        let mut interior = 0;
        for j in 1..p {
            for i in 1..p - j {
                lattice.push(([p - i - j, i, j], NodeKind::Interior(interior)));
                interior += 1;
            }
        }
        debug_assert_eq!(lattice.len(), dim_p(p));

        let nodes: Vec<Point> = lattice
            .iter()
            .map(|(b, _)| match node_set {
                NodeSet::Equispaced => Point::new(b[1] as f64 / p as f64, b[2] as f64 / p as f64),
                NodeSet::Warped => warped_node(p, b),
            })
            .collect();
        let kinds = lattice.iter().map(|(_, k)| *k).collect();

        let mut modes = Vec::with_capacity(dim_p(p));
        for total in 0..=p {
            for a in (0..=total).rev() {
                modes.push((a, total - a));
            }
        }
        let n = modes.len();
        let mut vdm = DMatrix::zeros(n, n);
        for (i, x) in nodes.iter().enumerate() {
            let (px, _, _) = legendre_with_derivatives(p, 2.0 * x.x - 1.0);
            let (py, _, _) = legendre_with_derivatives(p, 2.0 * x.y - 1.0);
            for (j, &(a, b)) in modes.iter().enumerate() {
                vdm[(i, j)] = px[a] * py[b];
            }
        }
        let coeffs = vdm.try_inverse().expect("Lagrange nodes are unisolvent");
        Self { degree, node_set, nodes, kinds, modes, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn node_set(&self) -> NodeSet {
        self.node_set
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Reference coordinates of the nodes.
    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn num_interior(&self) -> usize {
        let p = self.degree;
        if p < 3 { 0 } else { (p - 1) * (p - 2) / 2 }
    }

    /// Reference-coordinate values, gradients, and Hessians at `xi`.
    pub fn eval(&self, xi: &Point) -> PointEval {
        let p = self.degree;
        let (px, dpx, ddpx) = legendre_with_derivatives(p, 2.0 * xi.x - 1.0);
        let (py, dpy, ddpy) = legendre_with_derivatives(p, 2.0 * xi.y - 1.0);
        let n = self.dim();
        let mut mv = vec![0.0; n];
        let mut mg = vec![Point::zeros(); n];
        let mut mh = vec![Matrix2::zeros(); n];
        for (j, &(a, b)) in self.modes.iter().enumerate() {
            mv[j] = px[a] * py[b];
            mg[j] = Point::new(2.0 * dpx[a] * py[b], 2.0 * px[a] * dpy[b]);
            let xy = 4.0 * dpx[a] * dpy[b];
            mh[j] = Matrix2::new(4.0 * ddpx[a] * py[b], xy, xy, 4.0 * px[a] * ddpy[b]);
        }
        let mut value = vec![0.0; n];
        let mut grad = vec![Point::zeros(); n];
        let mut hess = vec![Matrix2::zeros(); n];
        for i in 0..n {
            for j in 0..n {
                let c = self.coeffs[(j, i)];
                if c != 0.0 {
                    value[i] += c * mv[j];
                    grad[i] += mg[j] * c;
                    hess[i] += mh[j] * c;
                }
            }
        }
        PointEval { value, grad, hess }
    }

    /// Values only.
    pub fn eval_values(&self, xi: &Point) -> Vec<f64> {
        let p = self.degree;
        let (px, _, _) = legendre_with_derivatives(p, 2.0 * xi.x - 1.0);
        let (py, _, _) = legendre_with_derivatives(p, 2.0 * xi.y - 1.0);
        let mv: Vec<f64> = self.modes.iter().map(|&(a, b)| px[a] * py[b]).collect();
        (0..self.dim())
            .map(|i| (0..mv.len()).map(|j| self.coeffs[(j, i)] * mv[j]).sum())
            .collect()
    }
}

const WARP_ALPHA: [f64; 15] =
    [0.0, 0.0, 1.4152, 0.1001, 0.2751, 0.98, 1.0999, 1.2832, 1.3648, 1.4773, 1.4959, 1.5743, 1.577, 1.6223, 1.6258];

/// Gauss–Lobatto–Legendre nodes on `[-1, 1]`, ascending.
fn gauss_lobatto(n: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..=n).map(|i| -(std::f64::consts::PI * i as f64 / n as f64).cos()).collect();
    for xi in x.iter_mut().take(n).skip(1) {
        for _ in 0..100 {
            let (p, dp, _) = legendre_with_derivatives(n, *xi);
            // (1 - x²) P'' = 2x P' - n(n+1) P
            let ddp = (2.0 * *xi * dp[n] - (n * (n + 1)) as f64 * p[n]) / (1.0 - *xi * *xi);
            let dx = dp[n] / ddp;
            *xi -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
    }
    x
}

/// Warp function: equispaced interpolant of the GLL displacement, divided
/// by the edge blend `1 - r²`.
fn warp_factor(n: usize, r: f64) -> f64 {
    let gll = gauss_lobatto(n);
    let req: Vec<f64> = (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
    let mut warp = 0.0;
    for i in 0..=n {
        let mut l = 1.0;
        for j in 0..=n {
            if j != i {
                l *= (r - req[j]) / (req[i] - req[j]);
            }
        }
        warp += l * (gll[i] - req[i]);
    }
    if r.abs() < 1.0 - 1e-10 { warp / (1.0 - r * r) } else { 0.0 }
}

fn warped_node(p: usize, bary: &[usize; 3]) -> Point {
    let alpha = if p <= 15 { WARP_ALPHA[p - 1] } else { 5.0 / 3.0 };
    // Equilateral frame: L2 at (-1, -1/√3), L3 at (1, -1/√3), L1 at (0, 2/√3).
    let l2 = bary[0] as f64 / p as f64;
    let l3 = bary[1] as f64 / p as f64;
    let l1 = bary[2] as f64 / p as f64;
    let s3 = 3f64.sqrt();
    let mut x = -l2 + l3;
    let mut y = (-l2 - l3 + 2.0 * l1) / s3;
    let w1 = 4.0 * l2 * l3 * warp_factor(p, l3 - l2) * (1.0 + (alpha * l1).powi(2));
    let w2 = 4.0 * l1 * l3 * warp_factor(p, l1 - l3) * (1.0 + (alpha * l2).powi(2));
    let w3 = 4.0 * l1 * l2 * warp_factor(p, l2 - l1) * (1.0 + (alpha * l3).powi(2));
    let (c2, s2) = ((2.0 * std::f64::consts::PI / 3.0).cos(), (2.0 * std::f64::consts::PI / 3.0).sin());
    let (c4, s4) = ((4.0 * std::f64::consts::PI / 3.0).cos(), (4.0 * std::f64::consts::PI / 3.0).sin());
    x += w1 + c2 * w2 + c4 * w3;
    y += s2 * w2 + s4 * w3;
    let m1 = (y + 1.0 / s3) / s3;
    let m3 = (1.0 - m1 + x) / 2.0;
    Point::new(m3, m1)
}

/// Orthonormal Legendre basis of `P_k` on a face of length `length`,
/// parameterized by `s ∈ [0, 1]` from the lower- to the higher-indexed
/// endpoint.
#[derive(Debug, Clone, Copy)]
pub struct FaceBasis {
    pub degree: usize,
}

impl FaceBasis {
    pub fn new(degree: usize) -> Self {
        Self { degree }
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn eval(&self, s: f64, length: f64) -> Vec<f64> {
        let (p, _, _) = legendre_with_derivatives(self.degree, 2.0 * s - 1.0);
        p.iter()
            .enumerate()
            .map(|(j, v)| v * ((2 * j + 1) as f64 / length).sqrt())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{cell_quadrature, face_quadrature};
    use approx::assert_abs_diff_eq;

    #[test]
    fn kronecker_property() {
        for set in [NodeSet::Equispaced, NodeSet::Warped] {
            for p in 1..=7 {
                let b = CellBasis::new(p, set);
                for (j, x) in b.nodes().iter().enumerate() {
                    let v = b.eval(x).value;
                    for (i, vi) in v.iter().enumerate() {
                        let d = if i == j { 1.0 } else { 0.0 };
                        assert!((vi - d).abs() < 1e-10, "p={p} set={set:?} i={i} j={j} v={vi}");
                    }
                }
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        for p in 1..=6 {
            let b = CellBasis::new(p, NodeSet::Equispaced);
            let q = cell_quadrature(2 * p).unwrap();
            for x in &q.points {
                let e = b.eval(x);
                assert_abs_diff_eq!(e.value.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
                let g: Point = e.grad.iter().sum();
                assert!(g.norm() < 1e-10);
                let h: Matrix2<f64> = e.hess.iter().sum();
                assert!(h.norm() < 1e-8);
            }
        }
    }

    #[test]
    fn reproduces_quadratic_derivatives() {
        let b = CellBasis::new(4, NodeSet::Equispaced);
        let f = |x: &Point| 1.0 + 2.0 * x.x - x.y + 3.0 * x.x * x.x - 0.5 * x.x * x.y + x.y * x.y;
        let coef: Vec<f64> = b.nodes().iter().map(f).collect();
        let x = Point::new(0.2, 0.3);
        let e = b.eval(&x);
        let val: f64 = coef.iter().zip(&e.value).map(|(c, v)| c * v).sum();
        let grad: Point = coef.iter().zip(&e.grad).map(|(c, g)| g * *c).sum();
        let hess: Matrix2<f64> = coef.iter().zip(&e.hess).map(|(c, h)| h * *c).sum();
        assert_abs_diff_eq!(val, f(&x), epsilon = 1e-12);
        assert_abs_diff_eq!(grad.x, 2.0 + 6.0 * x.x - 0.5 * x.y, epsilon = 1e-11);
        assert_abs_diff_eq!(grad.y, -1.0 - 0.5 * x.x + 2.0 * x.y, epsilon = 1e-11);
        assert_abs_diff_eq!(hess[(0, 0)], 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(hess[(0, 1)], -0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(hess[(1, 1)], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn warped_edges_are_symmetric_gll() {
        let p = 5;
        let b = CellBasis::new(p, NodeSet::Warped);
        let gll = gauss_lobatto(p);
        for (x, k) in b.nodes().iter().zip(b.kinds()) {
            if let NodeKind::Edge { edge: 0, index } = k {
                assert_abs_diff_eq!(x.y, 0.0, epsilon = 1e-13);
                assert_abs_diff_eq!(x.x, 0.5 * (1.0 + gll[*index]), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn face_basis_orthonormal() {
        for k in 0..=5 {
            let fb = FaceBasis::new(k);
            let q = face_quadrature(2 * k).unwrap();
            let len = 0.37;
            let mut m = DMatrix::<f64>::zeros(k + 1, k + 1);
            for (s, w) in q.points.iter().zip(&q.weights) {
                let v = fb.eval(s.x, len);
                for i in 0..=k {
                    for j in 0..=k {
                        m[(i, j)] += w * len * v[i] * v[j];
                    }
                }
            }
            assert!((m - DMatrix::identity(k + 1, k + 1)).norm() < 1e-12);
        }
    }
}
