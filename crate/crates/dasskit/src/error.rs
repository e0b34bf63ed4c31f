//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller supplied an argument that violates an operation's contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation was called on an object in the wrong state
    /// (e.g. stepping a terminated episode).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A text artifact failed to parse. Carries enough context to point at
    /// the offending line and field.
    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// The artifact declares a format version this build does not understand.
    #[error("unsupported format version in {path}: found {found}, expected {expected}")]
    UnsupportedVersion {
        path: PathBuf,
        found: String,
        expected: String,
    },

    /// Training produced a non-finite loss or parameter.
    #[error("numerical abort: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn invalid_state(msg: impl Into<String>) -> Self {
        Error::InvalidState(msg.into())
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::InvalidState(_) => 2,
            Error::Parse { .. } | Error::UnsupportedVersion { .. } | Error::Io { .. } => 3,
            Error::Numerical(_) => 4,
        }
    }
}
