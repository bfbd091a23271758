use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("layer {layer} ({kind}): {msg}")]
    Layer {
        layer: usize,
        kind: &'static str,
        msg: String,
    },

    #[error("backward called without a matching forward context")]
    NoForwardContext,

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("point is behind the camera (camera-frame depth {0} mm)")]
    BehindCamera(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index:?} out of range for dims {dims:?}")]
    OutOfRange { index: Vec<usize>, dims: Vec<usize> },

    #[error("could not place {count} people after {retries} retries")]
    Placement { count: usize, retries: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
