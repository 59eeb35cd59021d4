use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point ({x}, {y}) lies outside the triangle 0 <= y <= x <= 1")]
    Domain { x: f64, y: f64 },
    #[error("grid mismatch: {0} vs {1} points")]
    GridMismatch(usize, usize),
    #[error("no convergence after {iters} iterations (last sup change {last_change:e})")]
    Convergence { iters: usize, last_change: f64 },
    #[error("training diverged at epoch {epoch}")]
    TrainingDivergence { epoch: usize },
    #[error("checksum mismatch: manifest {expected}, data {actual}")]
    Checksum { expected: String, actual: String },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated blob: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("structural error: {0}")]
    Structural(String),
    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
