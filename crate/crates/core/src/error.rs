use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Template or option expression could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// A precondition or config invariant was violated.
    #[error("invalid input: {0}")]
    Validation(String),

    /// A dataset record failed validation.
    #[error("{path}:{line}: {msg}")]
    Record {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A required input file does not exist.
    #[error("missing input file: {0}")]
    MissingInput(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Non-finite values encountered during training or evaluation.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors a CLI should report as usage/validation failures
    /// (exit code 2) rather than runtime failures (exit code 1).
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse(_) | Error::Validation(_) | Error::Record { .. } | Error::MissingInput(_)
        )
    }
}
