use thiserror::Error;

/// Errors produced by the library's validating constructors and operations.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got} ({context})")]
    ShapeMismatch {
        expected: String,
        got: String,
        context: String,
    },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training aborted at epoch {epoch}, step {step}: {reason}")]
    TrainAbort {
        epoch: usize,
        step: usize,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, CoreError>;
