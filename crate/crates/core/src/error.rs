use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite value in {stage}")]
    NonFinite { stage: String },

    #[error("forward cache missing: {0}")]
    MissingCache(&'static str),

    #[error("wav: {0}")]
    Wav(#[from] WavError),

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WavError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported codec (format tag {format_tag}, {bits} bits)")]
    UnknownCodec { format_tag: u16, bits: u16 },
    #[error("truncated data chunk: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file")]
    Truncated,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("array {name}: {msg}")]
    ShapeMismatch { name: String, msg: String },
}
