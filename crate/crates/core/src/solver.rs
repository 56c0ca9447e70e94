//! Sparse Cholesky factorization (faer, AMD ordering) and extreme-eigenvalue
//! condition estimates.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{LltError, LltRegularization};
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, LltRef, SymbolicCholesky, SymmetricOrdering};
use faer::{Conj, MatMut, Par, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// `A = LLᵀ` of a symmetric positive definite matrix.
#[derive(Debug)]
pub struct CholeskyFactor {
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
}

impl CholeskyFactor {
    pub fn factorize(a: &CsrMatrix) -> Result<Self> {
        let view = a.as_faer();
        let symbolic =
            factorize_symbolic_cholesky(view.symbolic(), Side::Lower, SymmetricOrdering::Amd, Default::default())
                .map_err(|e| Error::Solver(format!("symbolic factorization failed: {e:?}")))?;
        let mut values = vec![0.0; symbolic.len_val()];
        let par = Par::Seq;
        let mut mem = MemBuffer::new(symbolic.factorize_numeric_llt_scratch::<f64>(par, Default::default()));
        let stack = MemStack::new(&mut mem);
        let result = symbolic.factorize_numeric_llt(
            &mut values,
            view,
            Side::Lower,
            LltRegularization::default(),
            par,
            stack,
            Default::default(),
        );
        match result {
            Ok(_) => {}
            Err(LltError::NonPositivePivot { index }) => {
                // faer reports a position in the permuted order
                let pivot = match symbolic.perm() {
                    Some(perm) if index < a.n() => perm.arrays().0[index],
                    _ => index,
                };
                return Err(Error::NotPositiveDefinite { pivot });
            }
        }
        Ok(Self { symbolic, values })
    }

    pub fn n(&self) -> usize {
        self.symbolic.nrows()
    }

    /// Stored entries of the factor.
    pub fn factor_nnz(&self) -> usize {
        self.values.len()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n();
        assert_eq!(x.len(), n);
        let par = Par::Seq;
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, par));
        let stack = MemStack::new(&mut mem);
        let rhs = MatMut::from_column_major_slice_mut(x, n, 1);
        LltRef::new(&self.symbolic, &self.values).solve_in_place_with_conj(Conj::No, rhs, par, stack);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// `‖Ax − b‖ / ‖b‖` (or `‖Ax‖` when `b = 0`).
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: f64 = ax.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb > 0.0 { r / nb } else { r }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionEstimate {
    pub kappa: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub iterations_max: usize,
    pub iterations_min: usize,
    pub converged: bool,
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Start vector of the power iterations: a fixed positive sequence, or
/// uniform entries in `[0.5, 1.5)` drawn from `seed`.
fn start_vector(n: usize, seed: Option<u64>) -> Vec<f64> {
    match seed {
        None => (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662466927).fract()).collect(),
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..n).map(|_| rng.random_range(0.5..1.5)).collect()
        }
    }
}

/// Power iteration of `op`. The Rayleigh quotient is accepted once the
/// eigen-residual `‖op(v) − λv‖ / |λ|` falls below `tol`; its error is then
/// of order `tol²` relative to the spectral gap.
fn power_iteration(mut v: Vec<f64>, tol: f64, max_iter: usize, op: impl Fn(&[f64]) -> Vec<f64>) -> (f64, usize, bool) {
    normalize(&mut v);
    let mut lambda = 0.0;
    for it in 1..=max_iter {
        let mut w = op(&v);
        lambda = dot(&v, &w);
        let res = w.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        if res <= tol * lambda.abs() {
            return (lambda, it, true);
        }
        normalize(&mut w);
        v = w;
    }
    (lambda, max_iter, false)
}

/// `κ₂(A) = λ_max / λ_min` by power iteration on `A` and on `A⁻¹` through
/// the factorization.
pub fn estimate_condition(
    a: &CsrMatrix,
    factor: &CholeskyFactor,
    tol: f64,
    max_iter: usize,
    seed: Option<u64>,
) -> ConditionEstimate {
    let n = a.n();
    let (lambda_max, iterations_max, c1) = power_iteration(start_vector(n, seed), tol, max_iter, |v| a.matvec(v));
    let (mu, iterations_min, c2) = power_iteration(start_vector(n, seed), tol, max_iter, |v| factor.solve(v));
    let lambda_min = 1.0 / mu;
    ConditionEstimate {
        kappa: lambda_max / lambda_min,
        lambda_max,
        lambda_min,
        iterations_max,
        iterations_min,
        converged: c1 && c2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Triplets;
    use approx::assert_abs_diff_eq;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Triplets::new(n);
        for i in 0..n {
            t.push(i, i, 2.0);
            if i + 1 < n {
                t.push(i, i + 1, -1.0);
                t.push(i + 1, i, -1.0);
            }
        }
        t.build()
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let a = CsrMatrix::identity(5);
        let f = CholeskyFactor::factorize(&a).unwrap();
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(f.solve(&b), b.to_vec());
    }

    #[test]
    fn laplacian_solve_residual() {
        let a = laplacian_1d(200);
        let f = CholeskyFactor::factorize(&a).unwrap();
        let b: Vec<f64> = (0..200).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&b);
        assert!(relative_residual(&a, &x, &b) < 1e-12);
        assert!(f.factor_nnz() >= 200);
    }

    #[test]
    fn indefinite_matrix_names_pivot() {
        let mut t = Triplets::new(3);
        t.push(0, 0, 1.0);
        t.push(1, 1, -1.0);
        t.push(2, 2, 1.0);
        match CholeskyFactor::factorize(&t.build()) {
            Err(Error::NotPositiveDefinite { pivot }) => assert!(pivot < 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn condition_of_diagonal() {
        let mut t = Triplets::new(2);
        t.push(0, 0, 1.0);
        t.push(1, 1, 10.0);
        let a = t.build();
        let f = CholeskyFactor::factorize(&a).unwrap();
        let c = estimate_condition(&a, &f, 1e-2, 500, None);
        assert!(c.converged);
        assert_abs_diff_eq!(c.kappa, 10.0, epsilon = 0.1);
    }

    /// Closed-form eigenvalues `4 sin²(jπ / 2(n+1))`.
    #[test]
    fn condition_of_1d_laplacian() {
        let n = 10;
        let a = laplacian_1d(n);
        let f = CholeskyFactor::factorize(&a).unwrap();
        let c = estimate_condition(&a, &f, 1e-2, 500, None);
        let arg = |j: usize| (j as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64)).sin().powi(2);
        let exact = arg(n) / arg(1);
        assert!((c.kappa - exact).abs() < 0.02 * exact, "{} vs {exact}", c.kappa);
    }

    #[test]
    fn seeded_start_gives_same_estimate() {
        let a = laplacian_1d(10);
        let f = CholeskyFactor::factorize(&a).unwrap();
        let c1 = estimate_condition(&a, &f, 1e-6, 2000, Some(7));
        let c2 = estimate_condition(&a, &f, 1e-6, 2000, Some(7));
        let c3 = estimate_condition(&a, &f, 1e-6, 2000, None);
        assert_eq!(c1, c2);
        assert!((c1.kappa - c3.kappa).abs() < 1e-6 * c3.kappa);
    }

    #[test]
    fn nonconvergence_is_flagged() {
        let a = laplacian_1d(400);
        let f = CholeskyFactor::factorize(&a).unwrap();
        let c = estimate_condition(&a, &f, 1e-14, 3, None);
        assert!(!c.converged);
        assert_eq!(c.iterations_max, 3);
    }
}
