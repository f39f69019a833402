use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("unknown relation label `{0}`")]
    UnknownLabel(String),

    #[error("relation `{relation}`: out-of-range index in edge ({source_index}, {target_index}); shape is {n_rows}x{n_cols}")]
    OutOfRangeEdge {
        relation: String,
        source_index: usize,
        target_index: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid meta-path `{expr}`: {reason}")]
    MetaPath { expr: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NumericFault { epoch: usize, batch: usize },

    #[error("unknown aspect `{0}`")]
    UnknownAspect(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
