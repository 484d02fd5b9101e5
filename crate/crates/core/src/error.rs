use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: invalid UTF-8 at byte offset {offset}")]
    Encoding { path: PathBuf, offset: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model error in field `{field}`: {message}")]
    Model { field: String, message: String },

    #[error("analysis error: {0}")]
    Analysis(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn model(field: &str, message: impl Into<String>) -> Self {
        Error::Model {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag, used by the CLI and the C API.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Encoding { .. } => "encoding",
            Error::Config(_) => "config",
            Error::Model { .. } => "model",
            Error::Analysis(_) => "analysis",
        }
    }
}
