use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("{op}: shape mismatch {shapes:?}")]
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },

    #[error("{op}: non-finite output (input shapes {shapes:?})")]
    NonFinite {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },

    #[error("{op}: invalid argument: {reason}")]
    InvalidArgument { op: &'static str, reason: String },

    #[error("backward: loss must be a single-element tensor, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("no gradient reached leaf node {0}")]
    MissingGradient(usize),
}

pub type Result<T, E = KernelError> = std::result::Result<T, E>;
