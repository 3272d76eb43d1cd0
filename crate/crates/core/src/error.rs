use thiserror::Error;

/// Errors raised by the controller, predictor and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MfapcError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("normal matrix is not positive definite (lambda = {lambda})")]
    Factorization { lambda: f64 },

    #[error("empty trace")]
    EmptyTrace,
}

pub type Result<T> = std::result::Result<T, MfapcError>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(MfapcError::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

pub(crate) fn check_finite(context: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MfapcError::NonFinite(context))
    }
}
