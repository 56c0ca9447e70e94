//! Gauss rules on the unit interval and collapsed (Duffy) Gauss rules on the
//! reference triangle `(0,0), (1,0), (0,1)`.

use crate::error::{Error, Result};
use crate::mesh::Point;

/// Highest polynomial degree the rule families are built for.
pub const MAX_DEGREE: usize = 80;

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Reference coordinates. For interval rules only `x` is used.
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        // map [-1,1] -> [0,1]
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

fn check_degree(q: usize) -> Result<()> {
    if q > MAX_DEGREE {
        return Err(Error::QuadratureDegree { requested: q, max: MAX_DEGREE });
    }
    Ok(())
}

/// Rule on `[0, 1]` exact to degree `q`.
pub fn face_quadrature(q: usize) -> Result<QuadratureRule> {
    check_degree(q)?;
    let n = (q + 2) / 2;
    let (x, w) = gauss_legendre(n);
    Ok(QuadratureRule {
        points: x.into_iter().map(|t| Point::new(t, 0.0)).collect(),
        weights: w,
        degree: 2 * n - 1,
    })
}

/// Rule on the reference triangle exact to total degree `q`.
pub fn cell_quadrature(q: usize) -> Result<QuadratureRule> {
    check_degree(q)?;
    // The collapsed integrand carries an extra factor (1 - u).
    let n = (q + 3) / 2;
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (u, wu) in x.iter().zip(&w) {
        for (v, wv) in x.iter().zip(&w) {
            points.push(Point::new(*u, (1.0 - u) * v));
            weights.push(wu * wv * (1.0 - u));
        }
    }
    Ok(QuadratureRule { points, weights, degree: 2 * n - 2 })
}
