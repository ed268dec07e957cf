use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("dimension mismatch in {stage}: expected {expected}, got {got}")]
    DimensionMismatch {
        stage: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset has no {missing} samples; both classes are required")]
    SingleClass { missing: &'static str },

    #[error("training diverged: NaN loss at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("stage ordering violated: {0}")]
    StageOrder(String),

    #[error("bin {bin}: {source}")]
    Bin {
        bin: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no calibrator could be fitted: {0}")]
    NoCalibrator(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact {path}; run `{command}` first")]
    MissingArtifact { path: PathBuf, command: String },

    #[error("tensor file format: {0}")]
    Format(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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
