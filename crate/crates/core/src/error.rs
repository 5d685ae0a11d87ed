use thiserror::Error;

/// Errors raised by the numerical library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// A parameter or descriptor failed validation. `field` names the offending input.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("corrupted field: non-finite value at index {index}")]
    Corrupted { index: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("tridiagonal solve failed at row {row}")]
    SingularSystem { row: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> LabError {
    LabError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}
