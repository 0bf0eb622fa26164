use thiserror::Error;

/// Errors produced by the localization library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No usable information: every provider answered NA, or the fusion
    /// weights summed to zero.
    #[error("no information: {0}")]
    NoInformation(String),

    /// The collection loop exhausted the repository without a single
    /// non-NA response.
    #[error("no information after {iterations} collection iterations over {contacted} providers")]
    Exhausted { iterations: usize, contacted: usize },

    #[error("routing error at {at}: {reason}")]
    Routing { at: String, reason: String },

    #[error("unseal failed: {0}")]
    Unseal(#[from] crate::overlay::onion::UnsealError),

    #[error("world generation failed: {0}")]
    Generation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
