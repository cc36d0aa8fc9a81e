use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands disagree on shape.
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A precondition of an operation was violated by the caller.
    #[error("contract violated: {0}")]
    Contract(String),

    /// Invalid configuration value, key or combination.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed PPM/PGM payload.
    #[error("image format error at byte {offset}: {reason}")]
    ImageFormat { offset: usize, reason: String },

    /// Malformed EMB1 or checkpoint payload.
    #[error("format error{}: {reason}", record.map(|r| format!(" in record {r}")).unwrap_or_default())]
    Format {
        record: Option<usize>,
        reason: String,
    },

    /// The requested workflow needs inputs that only an external extractor can produce.
    #[error("capability error: {0}")]
    Capability(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(record: Option<usize>, reason: impl Into<String>) -> Self {
        Error::Format {
            record,
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
