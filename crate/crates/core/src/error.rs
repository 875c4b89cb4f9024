use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("no usable series (all {dropped} series were shorter than the minimum length {min_len})")]
    EmptyCorpus { dropped: usize, min_len: usize },

    #[error("invalid series `{id}`: {reason}")]
    InvalidSeries { id: String, reason: String },

    #[error("decomposition skipped for series `{id}`: {reason}")]
    DecompositionSkipped { id: String, reason: String },

    #[error("exp overflow in series `{id}` at index {index}")]
    ExpOverflow { id: String, index: usize },

    #[error("series of length {len} is shorter than block size {block}; use the identity fallback")]
    BlockTooLong { len: usize, block: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite activation in {layer} at batch row {row}")]
    NonFinite { layer: String, row: usize },

    #[error("non-finite parameter update at step {step}: {detail}")]
    Diverged { step: u64, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient history: need {needed} observations, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("no validation windows could be built")]
    NoValidationWindows,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
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
