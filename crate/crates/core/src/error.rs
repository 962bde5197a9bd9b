use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    /// The objective rose and could not be recovered by backtracking.
    #[error("solver diverged at iteration {iteration}")]
    Solver { iteration: usize, trace: Vec<f64> },

    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("ingestion failed: {0}")]
    Ingest(String),

    #[error("non-finite loss at step {step} ({detail}); state dumped to {dump:?}")]
    NonFinite {
        step: usize,
        detail: String,
        dump: Option<PathBuf>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }
}
