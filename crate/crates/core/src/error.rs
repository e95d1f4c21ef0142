use std::path::PathBuf;

use thiserror::Error;

use crate::fit::FitDiagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("value {value} for {what} is outside [0, 1]")]
    Domain { what: String, value: f64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("bootstrap interval unstable: {undefined} of {total} replicates undefined")]
    UnstableCi { undefined: usize, total: usize },

    #[error("numerical failure: {message} (after {} iterations)", diagnostics.iterations)]
    NumericalFailure {
        message: String,
        diagnostics: FitDiagnostics,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("tuning failed: every candidate penalty was excluded")]
    TuningFailure,

    #[error("load error: {0}")]
    Load(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
