use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid resolution: {bits} bits (supported range is {min}..={max})")]
    InvalidResolution { bits: u32, min: u32, max: u32 },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error(transparent)]
    Libsvm(#[from] LibsvmError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Failures while decoding an IDX container.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad IDX magic: expected leading bytes 00 00, found {0:02x} {1:02x}")]
    BadMagic(u8, u8),

    #[error("unsupported IDX type code 0x{0:02x}")]
    UnsupportedType(u8),

    #[error("truncated IDX data: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("IDX payload has {extra} trailing bytes beyond the declared {expected}")]
    TrailingBytes { expected: usize, extra: usize },
}

/// Failures while reading libsvm sparse text.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LibsvmError {
    #[error("line {line}: malformed token {token:?}")]
    MalformedToken { line: usize, token: String },

    #[error("line {line}: feature index {index} does not increase past {previous}")]
    NonIncreasingIndex {
        line: usize,
        index: usize,
        previous: usize,
    },

    #[error("line {line}: feature index {index} outside 1..={n_features}")]
    IndexOutOfRange {
        line: usize,
        index: usize,
        n_features: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
