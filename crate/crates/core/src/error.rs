//! Error type shared across the crate.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Categories map onto the CLI exit codes: data-shaped problems exit 2,
/// numeric failures exit 3.
#[derive(Debug)]
pub enum Error {
    /// Non-finite or otherwise unusable input values.
    InvalidInput(String),
    /// Matrix/vector dimensions that do not line up.
    ShapeMismatch(String),
    /// An operation received an empty cloud or map where content is required.
    EmptyInput(String),
    /// Occupied-key sets that were required to be identical differ.
    KeySetMismatch(String),
    /// Configuration value out of range or inconsistent.
    Config(String),
    /// Numeric failure at runtime (NaN loss, divergence).
    Numeric(String),
    /// Malformed file contents, with position information where available.
    Parse { path: String, detail: String },
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(m) => write!(f, "invalid input: {m}"),
            Error::ShapeMismatch(m) => write!(f, "shape mismatch: {m}"),
            Error::EmptyInput(m) => write!(f, "empty input: {m}"),
            Error::KeySetMismatch(m) => write!(f, "key-set mismatch: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Numeric(m) => write!(f, "numeric failure: {m}"),
            Error::Parse { path, detail } => write!(f, "parse error in {path}: {detail}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl Error {
    /// Exit code the CLI assigns to this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}
