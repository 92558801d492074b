use thiserror::Error;

/// Errors raised by the linear algebra layer, the oracles and the solvers.
#[derive(Debug, Error)]
pub enum QscError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("metric operator is not positive definite")]
    NotPositiveDefinite,

    #[error("operator is not positive semidefinite (smallest eigenvalue {eigenvalue:e})")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("regularized system is singular after {retries} jitter retries")]
    SingularSystem { retries: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inner solver hit the iteration cap ({iterations}) with residual {residual:e}")]
    MaxInnerIterations { iterations: usize, residual: f64 },

    #[error("adaptive search exceeded {doublings} doublings of sigma")]
    AdaptiveFailure { doublings: usize },

    #[error("point is outside the domain of the composite term")]
    OutsideDomain,

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("ragged input on line {line}: expected {expected} columns, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, QscError>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(QscError::DimensionMismatch { expected, found })
    }
}
