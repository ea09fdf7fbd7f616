use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Weights were all zero, negative or not finite.
    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Cholesky factorization failed.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("simulation failed on replicate {replicate}: {message}")]
    Simulation { replicate: usize, message: String },

    /// Non-finite or malformed input data.
    #[error("data error: {0}")]
    Data(String),

    /// A sampler ended with no usable mass.
    #[error("degenerate result: {0}")]
    Degenerate(String),
}

impl Error {
    /// True for failures caused by the numerics or the sampler rather than by
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::InvalidWeights(_) | Error::NotPositiveDefinite(_) | Error::Degenerate(_))
    }
}
