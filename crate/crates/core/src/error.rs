//! Error types shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A line in an input file failed to parse. Line numbers are 1-based.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Invalid configuration value or combination.
    #[error("config error: {0}")]
    Config(String),

    /// A caller violated an operation's contract (length mismatch, empty input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training produced a non-finite parameter.
    #[error("training diverged at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    /// An id is outside the model's index range.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// A metric has no defined value on the given inputs.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// The requested split cannot be built from this dataset.
    #[error("unsupported split: {0}")]
    UnsupportedSplit(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
