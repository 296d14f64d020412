use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, KafError>;

#[derive(Debug, Error)]
pub enum KafError {
    /// Bad shapes, out-of-range parameters, wrong model variant.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A factorization failed or a variance went negative beyond tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// `row` is 1-based.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
}

impl KafError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        KafError::Argument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        KafError::Numerical(msg.into())
    }
}
