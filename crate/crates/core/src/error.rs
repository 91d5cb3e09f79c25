use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("instance validation failed: {0}")]
    InstanceValidation(String),
    #[error("calibration infeasible: {0}")]
    Calibration(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("rate fit failed: {0}")]
    RateFit(String),
    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn invalid(msg: impl Into<String>) -> CoreError {
    CoreError::InvalidInput(msg.into())
}
