use std::io;

use thiserror::Error;

/// Errors produced by the encoder, learners and supporting data code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("distribution is not proper and cannot be sampled: {0}")]
    ImproperDistribution(String),

    #[error("task mismatch: expected {expected}, found {found}")]
    TaskMismatch { expected: String, found: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("categorical column `{0}` has no non-missing values")]
    AllMissing(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("dimension mismatch: expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular normal equations; use a ridge penalty lambda > 0")]
    SingularSystem,

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("non-finite model output at {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        Error::Csv {
            line,
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
