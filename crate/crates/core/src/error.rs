use thiserror::Error;

/// Errors produced anywhere in the eviction pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The input could not be decoded as JSON of the expected shape.
    #[error("parse error: {0}")]
    Parse(String),

    /// A structural or numeric invariant was violated. `path` names the
    /// first offending location, e.g. `attention[0][1][2]`.
    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },

    /// A synthetic-trace specification is inconsistent.
    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    /// A policy or search configuration is out of range.
    #[error("invalid config: {0}")]
    Config(String),

    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },

    #[error("metric error: {0}")]
    Metric(String),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
