use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QfiError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("size overflow: {0}")]
    Size(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate fit: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, QfiError>;

pub(crate) fn ensure_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(QfiError::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn ensure_finite(what: &str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(QfiError::InvalidInput(format!("{what} must be finite, got {value}")));
    }
    Ok(())
}

pub(crate) fn ensure_positive(what: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(QfiError::InvalidInput(format!("{what} must be positive, got {value}")));
    }
    Ok(())
}
