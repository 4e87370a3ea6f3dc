use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A record in an input file could not be parsed.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A snapshot parsed fine but violates an order-book invariant.
    #[error("invalid snapshot at ts {timestamp}: {msg}")]
    InvalidSnapshot { timestamp: i64, msg: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input outside the support of a density (e.g. non-positive log-normal target).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
