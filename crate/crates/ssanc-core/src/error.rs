//! Error type shared by all modules.

use thiserror::Error;

/// Crate-wide error type.
///
/// The variants map onto the CLI exit codes: configuration and argument
/// problems exit with 2, numeric failures with 3, I/O with 4.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value or dimension is invalid.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration file or option is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric procedure failed (solver breakdown, non-convergence).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// System identification could not produce a usable estimate.
    #[error("identification failed: {0}")]
    Identification(String),

    /// A metric is undefined for the given signals.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// File or format error.
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Exit code the CLI uses for this error class.
impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 2,
            Error::Numeric(_) | Error::Identification(_) | Error::UndefinedMetric(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
