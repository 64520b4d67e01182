use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("empty segment {segment} in {op}")]
    EmptySegment { op: &'static str, segment: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("loss must be a 1x1 tensor, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("tape already consumed by a previous backward pass")]
    TapeCleared,

    #[error("function is not deterministic: value drifted from {first} to {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("input too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("non-finite loss at epoch {epoch} (fold {fold}, seed {seed})")]
    Diverged { epoch: usize, fold: usize, seed: u64 },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }
}
