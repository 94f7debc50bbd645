use std::path::PathBuf;

use thiserror::Error;

use crate::textcodec::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("csv error at row {row}, column {column}: {message}")]
    Csv {
        /// Zero-based data row index (header excluded).
        row: usize,
        column: String,
        message: String,
    },

    #[error("degenerate dataset: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("encoding error: {0}")]
    Encode(String),

    #[error("could not parse generated sequence: {0}")]
    Parse(#[from] ParseError),

    #[error("sequence of length {len} exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("generation failed after exhausting retries: {accepted} accepted, {failed} failed")]
    Generation { accepted: usize, failed: usize },

    #[error("checkpoint version mismatch: {0}")]
    CheckpointVersion(String),

    #[error("truncated checkpoint: {0}")]
    CheckpointTruncated(String),

    #[error("checkpoint shape mismatch: {0}")]
    CheckpointShape(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
