use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite {quantity} at iteration {iter}")]
    NonFinite { quantity: String, iter: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("iteration {0} is not a snapshot iteration")]
    NotASnapshot(usize),

    #[error("overflow computing {0}")]
    Overflow(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            what,
            reason: reason.into(),
        }
    }

    /// Short machine-readable category used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation { .. } => "validation",
            Error::Shape(_) => "shape",
            Error::NonFinite { .. } => "non_finite",
            Error::Singular(_) => "singular",
            Error::NotASnapshot(_) => "not_a_snapshot",
            Error::Overflow(_) => "overflow",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
