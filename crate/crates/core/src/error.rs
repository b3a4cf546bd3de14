use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Task-suite or label-set validation failure.
    #[error("schema error: {0}")]
    Schema(String),

    /// Bad run configuration, missing credentials, missing pricing and the like.
    #[error("config error: {0}")]
    Config(String),

    /// Caller broke a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Two label vectors do not cover the same instances.
    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    /// Retries exhausted against a transient failure.
    #[error("transport error after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: String, status: Option<u16> },

    /// Non-retryable rejection from the endpoint.
    #[error("request rejected with HTTP {status}: {body}")]
    Request { status: u16, body: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Format { context: String, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Format { context: context.into(), message: message.to_string() }
    }

    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Transport { .. } => 3,
            _ => 1,
        }
    }
}
