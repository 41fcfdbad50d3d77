use std::io;

use thiserror::Error;

use crate::geometry::GeometryError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violates a documented invariant (bad dimension, bad index, bad value).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration is internally inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error{}: {message}", entry.map(|i| format!(" in entry {i}")).unwrap_or_default())]
    Parse { entry: Option<usize>, message: String },

    #[error("planner fallback failed: {0}")]
    Fallback(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(msg: impl std::fmt::Display) -> Self {
        Error::Parse { entry: None, message: msg.to_string() }
    }

    pub(crate) fn parse_entry(entry: usize, msg: impl std::fmt::Display) -> Self {
        Error::Parse { entry: Some(entry), message: msg.to_string() }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::parse(e)
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::parse(e)
    }
}
