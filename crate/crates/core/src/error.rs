use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("{path}: not grayscale ({color})")]
    NotGrayscale { path: PathBuf, color: String },

    #[error("{0}: unsupported image format")]
    UnsupportedFormat(PathBuf),

    #[error("image is empty")]
    EmptyImage,

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("thresholds must be sorted ascending")]
    UnsortedThresholds,

    #[error("diagram contains an uncapped essential class")]
    InfiniteDeath,

    #[error("diagrams use different filtrations")]
    FiltrationMismatch,

    #[error("diagram has no finite-lifetime points")]
    EmptyDiagram,

    #[error("malformed diagram csv at line {line}: {message}")]
    DiagramCsv { line: usize, message: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
