use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape, channel or parameter inconsistency in a layer or model description.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported layer: {0}")]
    UnsupportedLayer(String),

    /// A computation produced a non-finite value or overflowed its accumulator.
    #[error("numeric fault in {layer}: {detail}")]
    NumericFault { layer: String, detail: String },

    #[error("missing weight {param:?} for layer {layer:?}")]
    MissingWeight { layer: String, param: String },

    /// Malformed file content (tensor dumps, manifests, annotation files).
    #[error("format error: {0}")]
    Format(String),

    /// Violated precondition on input data (empty calibration set, empty ground truth, ...).
    #[error("{0}")]
    Domain(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 2 for I/O, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }
}
