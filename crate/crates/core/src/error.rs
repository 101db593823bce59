use thiserror::Error;

#[derive(Debug, Error)]
pub enum KblError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The averaged Gram operator of a Kraus family is (numerically) singular.
    #[error("operators are not rectifiable: minimum eigenvalue {min_eigenvalue:e} at or below floor")]
    NotRectifiable { min_eigenvalue: f64 },

    #[error("unknown custom ensemble tag `{0}`")]
    UnknownSampler(String),

    #[error("dimension budget exceeded: {0}")]
    DimensionBudget(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, KblError>;

pub(crate) fn invalid(msg: impl Into<String>) -> KblError {
    KblError::InvalidArgument(msg.into())
}

pub(crate) fn shape(expected: impl std::fmt::Display, found: impl std::fmt::Display) -> KblError {
    KblError::ShapeMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
