use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the model, sampler and estimator code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument fell outside the support of the quantity being evaluated.
    #[error("domain error: {what} = {value}")]
    Domain { what: &'static str, value: f64 },

    /// Vector or matrix dimensions disagree.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A numerical routine (quadrature, root finding, optimisation) failed.
    #[error("numeric failure in {context}: {detail}")]
    Numeric {
        context: &'static str,
        detail: String,
    },

    /// Survival times that are zero or negative; rows are 0-based.
    #[error("non-positive survival times at rows {rows:?}")]
    NonPositiveTimes { rows: Vec<usize> },

    /// The design matrix does not have full column rank.
    #[error("design matrix has rank {rank} but {columns} columns")]
    RankDeficient { rank: usize, columns: usize },

    /// The dataset itself is malformed (lengths, status codes, groups).
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    /// A caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The sampler hit repeated non-finite kernel evaluations.
    #[error("sampler aborted at iteration {iteration} in block {block}: {state}")]
    SamplerAbort {
        iteration: usize,
        block: &'static str,
        state: String,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn domain(what: &'static str, value: f64) -> Error {
    Error::Domain { what, value }
}

pub(crate) fn numeric(context: &'static str, detail: impl Into<String>) -> Error {
    Error::Numeric {
        context,
        detail: detail.into(),
    }
}
