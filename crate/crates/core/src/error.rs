use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "infeasible cosupport: every drawn subset of {ell} rows out of {n} had rank {d} \
         after {retries} draws (cosparsity too large for this analysis operator)"
    )]
    InfeasibleCosupport {
        ell: usize,
        n: usize,
        d: usize,
        retries: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("iterate diverged at iteration {k}: non-finite entry in {field}")]
    Divergence { k: usize, field: &'static str },

    #[error("reference solution unavailable: {0}")]
    ReferenceUnavailable(String),

    #[error("insufficient trace: {0}")]
    InsufficientTrace(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
