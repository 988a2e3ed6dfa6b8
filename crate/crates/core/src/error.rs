use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("length mismatch: header declares {declared} records, found {found}")]
    LengthMismatch { declared: usize, found: usize },

    #[error("training subset is empty")]
    EmptySubset,

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("budget {budget} exceeds total availability {available}")]
    BudgetExceedsAvailability { budget: usize, available: usize },

    #[error("class {class}: {available} samples remain after trimming, {requested} requested")]
    InsufficientAfterTrim {
        class: u32,
        available: usize,
        requested: usize,
    },

    #[error("class {0} has no samples")]
    EmptyClass(u32),

    #[error("average precision needs at least one positive label")]
    NoPositives,

    #[error("policy {0} requires a score vector")]
    MissingScores(&'static str),

    #[error("no results to report")]
    EmptyResults,

    #[error("results schema mismatch: {0}")]
    Schema(String),

    #[error("i/o error on {path}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
