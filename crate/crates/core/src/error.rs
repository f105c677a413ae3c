//! Error types shared across the crate.

use thiserror::Error;

/// Errors from model operations and learner configuration.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    /// An input vector or matrix did not match the expected dimensions.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A parameter was outside its admissible range.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

impl CoreError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        CoreError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

/// Errors from dataset loading, generation, and serialization.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: parse error: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("{path}:{line}: row has {got} columns, expected {expected}")]
    Schema {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("{path}: dataset is empty")]
    Empty { path: String },

    #[error("{path}: bad magic: expected {expected:#010x}, observed {observed:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        observed: u32,
    },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("{path}: truncated payload: expected {expected} bytes, got {got}")]
    Truncated {
        path: String,
        expected: usize,
        got: usize,
    },

    #[error(transparent)]
    Invalid(#[from] CoreError),
}

/// Errors from the noise-rate estimator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("buffer too small: {got} records, minimum is {minimum}")]
    BufferTooSmall { got: usize, minimum: usize },

    #[error("no records with sampled label {class}; cannot anchor that class")]
    EmptyClassBucket { class: usize },

    #[error("training produced non-finite parameters")]
    Diverged,

    #[error(transparent)]
    Invalid(#[from] CoreError),
}
