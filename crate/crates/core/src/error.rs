use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on shapes, ranges or call order was not met.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A feature vector with (numerically) zero norm reached a cosine computation.
    #[error("degenerate feature: {0}")]
    DegenerateFeature(String),

    #[error("backend `{backend}` failed{}: {message}", if *.retryable { " (retryable)" } else { "" })]
    Backend {
        backend: String,
        message: String,
        retryable: bool,
    },

    #[error("fixture error: {0}")]
    Fixture(String),

    #[error("could not parse a keyword from answer {0:?}")]
    Unparseable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn backend(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Backend {
            backend: backend.into(),
            message: message.into(),
            retryable: true,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Backend { retryable: true, .. })
    }
}
