use thiserror::Error;

/// Errors reported by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent user input (mesh files, parameters, load data).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("unsupported quadrature degree {requested} (maximum supported is {max})")]
    QuadratureDegree { requested: usize, max: usize },

    /// Sparse Cholesky hit a pivot that is not strictly positive.
    #[error("matrix is not positive definite: non-positive pivot at elimination step {pivot}")]
    NotPositiveDefinite { pivot: usize },

    /// A dense local system that should be nonsingular was singular.
    #[error("singular local system in cell {cell}: {what}")]
    SingularLocal { cell: usize, what: &'static str },

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
