use thiserror::Error;

use qsc_core::QscError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("reference solve did not converge (last g = {last_g:e})")]
    ReferenceNotConverged { last_g: f64 },

    #[error("not enough data for a fit: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Core(#[from] QscError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit code: 3 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Core(QscError::InvalidParameter(_) | QscError::DimensionMismatch { .. } | QscError::OutsideDomain) => 3,
            CliError::Core(QscError::Parse { .. } | QscError::Ragged { .. }) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
