use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Cache(#[from] CacheError),

    #[error("non-finite {term} loss term ({value})")]
    NonFiniteLoss { term: &'static str, value: f64 },

    #[error("solver diverged at iteration {iteration}: {reason}")]
    Divergence {
        iteration: usize,
        reason: String,
        params: Vec<f64>,
    },

    #[error("center of mass undefined: reconstruction sums to {0}")]
    UndefinedCom(f64),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
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

/// Failures while reading or validating a cached sensitivity matrix.
#[derive(Debug, Error)]
pub enum CacheError {
    #[error("bad magic bytes in jacobian cache {0}")]
    BadMagic(PathBuf),

    #[error("jacobian cache {0} is truncated")]
    Truncated(PathBuf),

    #[error("jacobian cache {0} has trailing bytes after the checksum")]
    TrailingBytes(PathBuf),

    #[error("jacobian cache {path} checksum mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    ChecksumMismatch {
        path: PathBuf,
        stored: u64,
        computed: u64,
    },

    #[error("jacobian cache {path} header field `{field}` is {cached}, configuration wants {expected}")]
    HeaderMismatch {
        path: PathBuf,
        field: &'static str,
        cached: String,
        expected: String,
    },

    #[error("jacobian of {bytes} bytes exceeds the memory budget of {budget} bytes")]
    TooLarge { bytes: u64, budget: u64 },
}
