use thiserror::Error;

/// Errors raised by layout construction, prediction and decoding.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IceError {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid mask budget: total {total} is smaller than {steps} steps")]
    InvalidBudget { total: usize, steps: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("shape mismatch: expected length {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("no candidate is consistent with the decoder state")]
    InconsistentState,

    #[error("layout incompatible with task: {0}")]
    LayoutIncompatible(String),

    #[error("answer confidence undefined: no masked answer position")]
    UndefinedConfidence,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, IceError>;
