use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("periodic Poisson problem is incompatible: mean of right-hand side is {mean:e}")]
    IncompatiblePoisson { mean: f64 },

    #[error("layer thickness H+h = {thickness:e} at cell ({i}, {j}) is not positive")]
    NonPositiveThickness { i: usize, j: usize, thickness: f64 },

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },

    #[error("tape has already been consumed by a backward pass")]
    TapeConsumed,

    #[error("dataset too short: need {needed} frames, have {available}")]
    DatasetTooShort { needed: usize, available: usize },

    #[error("missing history: encoder needs {needed} observation frames, got {got}")]
    MissingHistory { needed: usize, got: usize },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("checkpoint does not match configuration: {0}")]
    CheckpointMismatch(String),

    #[error("output directory {0} is locked by another process")]
    Locked(PathBuf),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::NonPositiveThickness { .. } => 2,
            Error::Verification(_) => 3,
            _ => 1,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }
}
