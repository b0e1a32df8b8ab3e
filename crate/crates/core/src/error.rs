use thiserror::Error;

#[derive(Debug, Error)]
pub enum DpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("out-of-order leaf: expected {expected}, got {got}")]
    Ordering { expected: usize, got: usize },

    #[error("sensitivity violation: vector norm {norm} exceeds clip norm {clip_norm}")]
    SensitivityViolation { norm: f64, clip_norm: f64 },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("indefinite system: smallest eigenvalue of 2W + λI is {min_eigenvalue:.3e}; increase λ")]
    IndefiniteSystem { min_eigenvalue: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DpError>;

pub(crate) fn invalid(msg: impl Into<String>) -> DpError {
    DpError::InvalidInput(msg.into())
}
