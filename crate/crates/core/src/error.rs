use thiserror::Error;

use crate::models::LossKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point outside the generator's support: {0}")]
    Domain(String),

    #[error("dataset carries no latent metadata required for this operation")]
    MissingLatent,

    #[error("loss {0:?} has no gradient")]
    UnsupportedGradient(LossKind),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite loss at gradient step {step}")]
    Divergence { step: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("only {usable} usable grid points after excluding zero medians (need 3)")]
    InsufficientGrid { usable: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than by a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
                | Error::Domain(_)
                | Error::MissingLatent
                | Error::UnsupportedGradient(_)
                | Error::Unsupported(_)
                | Error::Empty(_)
                | Error::Json(_)
        )
    }
}
