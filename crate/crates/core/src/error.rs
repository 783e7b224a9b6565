use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("canvas too small: formation needs {need_h}x{need_w} px, canvas is {have_h}x{have_w}")]
    CanvasTooSmall {
        need_h: usize,
        need_w: usize,
        have_h: usize,
        have_w: usize,
    },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    TrainingFailure { epoch: usize, loss: f64 },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("undefined AUC: {0}")]
    UndefinedAuc(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed PNG {path}: {message}")]
    MalformedPng { path: PathBuf, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
