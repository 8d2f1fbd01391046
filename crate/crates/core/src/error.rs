//! Crate-wide error type with a stable mapping onto process exit codes.

use thiserror::Error;

/// Errors surfaced by the library. Each variant maps onto one of the CLI
/// exit codes: `Usage` -> 2, `Data`/`Parse`/`Io` -> 3, `Internal` -> 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file; names the source and 1-based line number.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    /// Well-formed input that violates a documented precondition.
    #[error("{0}")]
    Data(String),

    /// Caller misuse: bad flags, out-of-range parameters, missing config keys.
    #[error("{0}")]
    Usage(String),

    /// Violated internal invariant; indicates a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::Data(message.into())
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Error::Usage(message.into())
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Error::Internal(message.into())
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Io(_) | Error::Parse { .. } | Error::Data(_) => 3,
            Error::Internal(_) => 4,
        }
    }

    /// Short machine-parsable class tag used in CLI error lines.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Usage(_) => "usage",
            Error::Io(_) | Error::Parse { .. } | Error::Data(_) => "data",
            Error::Internal(_) => "internal",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
