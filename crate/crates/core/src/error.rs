use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not satisfy an operation's contract.
    #[error("{op}: dimension error: {msg}")]
    Shape { op: &'static str, msg: String },

    /// An API was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    /// A configuration value violates a constraint.
    #[error("config error: {0}")]
    Config(String),

    /// A file could not be parsed.
    #[error("format error: {0}")]
    Format(String),

    /// Training produced a NaN or infinite value.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(op: &'static str, msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape {
        op,
        msg: msg.into(),
    })
}
