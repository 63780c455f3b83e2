use std::path::PathBuf;

/// Errors produced by the enhancement engine and its tooling.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value cannot be honoured (window design, filter design, flags).
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller handed in data that violates an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// A file is not in the expected container format.
    #[error("format error: {0}")]
    Format(String),

    /// A weight file parsed but a tensor does not match the model schema.
    #[error("schema error in tensor `{tensor}`: {reason}")]
    Schema { tensor: String, reason: String },

    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn schema(tensor: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            tensor: tensor.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
