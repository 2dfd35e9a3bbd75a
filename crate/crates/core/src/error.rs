use thiserror::Error;

/// Errors raised by the library. Configuration problems are kept apart from
/// runtime failures so the CLI can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid value for `{key}`: {reason}")]
    ConfigKey { key: String, reason: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid attention block: {0}")]
    Attention(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("malformed memory snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn key(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigKey {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::ConfigKey { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
