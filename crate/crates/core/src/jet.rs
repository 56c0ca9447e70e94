//! Forward-mode differentiation through bivariate Taylor jets truncated at
//! total order four.
//!
//! Exact solutions are written once as functions of two `Jet` arguments;
//! evaluating them at `(Jet::x(x0), Jet::y(y0))` yields every partial
//! derivative up to order four, which is what the load `Δ²u`, the boundary
//! data `∂_n u` and `∂_nn u`, and the error norms need.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::Matrix2;

use crate::mesh::Point;

pub const ORDER: usize = 4;
const LEN: usize = 15;

/// Position of the coefficient of `dx^a dy^b` (`a + b ≤ 4`).
const fn slot(a: usize, b: usize) -> usize {
    let t = a + b;
    t * (t + 1) / 2 + b
}

const EXPONENTS: [(usize, usize); LEN] = {
    let mut out = [(0, 0); LEN];
    let mut t = 0;
    while t <= ORDER {
        let mut b = 0;
        while b <= t {
            out[slot(t - b, b)] = (t - b, b);
            b += 1;
        }
        t += 1;
    }
    out
};

/// Truncated Taylor expansion `Σ c_ab dx^a dy^b` about a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    c: [f64; LEN],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = v;
        Self { c }
    }

    /// The coordinate `x` expanded at `x0`.
    pub fn x(x0: f64) -> Self {
        let mut j = Self::constant(x0);
        j.c[slot(1, 0)] = 1.0;
        j
    }

    pub fn y(y0: f64) -> Self {
        let mut j = Self::constant(y0);
        j.c[slot(0, 1)] = 1.0;
        j
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// `∂x^a ∂y^b` of the expanded function at the expansion point.
    pub fn derivative(&self, a: usize, b: usize) -> f64 {
        assert!(a + b <= ORDER);
        factorial(a) * factorial(b) * self.c[slot(a, b)]
    }

    pub fn gradient(&self) -> Point {
        Point::new(self.derivative(1, 0), self.derivative(0, 1))
    }

    pub fn hessian(&self) -> Matrix2<f64> {
        let xy = self.derivative(1, 1);
        Matrix2::new(self.derivative(2, 0), xy, xy, self.derivative(0, 2))
    }

    pub fn bilaplacian(&self) -> f64 {
        self.derivative(4, 0) + 2.0 * self.derivative(2, 2) + self.derivative(0, 4)
    }

    /// `f(self)` given `f` and its first four derivatives at `self.value()`.
    fn compose(self, d: [f64; ORDER + 1]) -> Self {
        let mut h = self;
        h.c[0] = 0.0;
        let mut out = Self::constant(d[0]);
        let mut hp = Self::constant(1.0);
        let mut fact = 1.0;
        for (n, dn) in d.iter().enumerate().skip(1) {
            hp = hp * h;
            fact *= n as f64;
            out = out + hp * (dn / fact);
        }
        out
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([s, c, -s, -c, s])
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([c, -s, -c, s, c])
    }

    pub fn exp(self) -> Self {
        let e = self.value().exp();
        self.compose([e; ORDER + 1])
    }

    pub fn powi(self, n: u32) -> Self {
        (0..n).fold(Self::constant(1.0), |acc, _| acc * self)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a += b;
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a -= b;
        }
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for a in &mut self.c {
            *a = -*a;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut c = [0.0; LEN];
        for (i, &(a1, b1)) in EXPONENTS.iter().enumerate() {
            let u = self.c[i];
            if u == 0.0 {
                continue;
            }
            for (j, &(a2, b2)) in EXPONENTS.iter().enumerate() {
                if a1 + a2 + b1 + b2 <= ORDER {
                    c[slot(a1 + a2, b1 + b2)] += u * rhs.c[j];
                }
            }
        }
        Jet { c }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.c[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        for a in &mut self.c {
            *a *= rhs;
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self * (1.0 / rhs)
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs * self
    }
}
