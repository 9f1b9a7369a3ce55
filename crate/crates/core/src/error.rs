use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Input shape is wrong: missing column, vector of the wrong length, mixed dims.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("conflict: query id {0:?} already present")]
    Conflict(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Network-level failure talking to a remote provider. Safe to retry.
    #[error("transport error (retryable): {0}")]
    Transport(String),

    /// Remote peer answered, but not with something we can decode.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Two things that must agree (provider id, dim, fingerprint) do not.
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown query id {0:?}")]
    NotFound(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failed operation may succeed if simply repeated.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}
