use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed binary container; `offset` is the byte position of the record
    /// (or field) that failed.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    /// Text-format problem (manifest, metrics, config fragments).
    #[error("format error: {0}")]
    Format(String),

    /// Shapes or dimensions of two objects do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A fit was asked for on degenerate input (zero mass, zero extent).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A forward/backward pass produced a NaN or infinity.
    #[error("non-finite value in layer {layer}: {message}")]
    NonFinite { layer: usize, message: String },

    /// Invalid argument or configuration of an operation.
    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
