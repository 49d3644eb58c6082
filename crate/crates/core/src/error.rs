use std::path::PathBuf;

/// Errors raised by estimation, sampling and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Data(String),

    #[error("row {row}, column '{column}': {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("{what} is rank deficient (smallest singular value {sigma_min:.3e})")]
    RankDeficient { what: &'static str, sigma_min: f64 },

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sampler failure: {0}")]
    Sampler(String),
}

/// Coarse failure classes, used by the CLI to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } | Error::Data(_) | Error::Cell { .. } => ErrorClass::Data,
            Error::InvalidArgument(_) | Error::UnknownColumn(_) => ErrorClass::Usage,
            Error::RankDeficient { .. }
            | Error::NotPositiveDefinite(_)
            | Error::Dimension(_)
            | Error::Sampler(_) => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
