use std::fmt;

use serde::Serialize;

/// Errors raised by estimation, validation and the numerical kernels underneath them.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is singular (pivot magnitude {pivot:e} at column {index})")]
    Singular { index: usize, pivot: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("invalid quantile grid: {0}")]
    InvalidGrid(String),

    #[error("sample is empty")]
    EmptySample,

    #[error("density vanishes or is not finite at level {level}")]
    DegenerateDensity { level: f64 },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("no convergence after {iterations} iterations (last step {last_step:e}, log-likelihood {log_likelihood})")]
    NoConvergence {
        iterations: usize,
        last_step: f64,
        log_likelihood: f64,
    },

    #[error(
        "test needs at least one degree of freedom, got k = {k} with {params} fitted parameters"
    )]
    InsufficientDof { k: usize, params: usize },

    #[error("estimated scale {0} is not positive")]
    NonPositiveScale(f64),

    #[error("goodness-of-fit tests are defined for gQLS fits only")]
    NotGqls,

    #[error("all {0} bootstrap replicates failed to fit")]
    BootstrapFailed(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Non-fatal conditions attached to responses, fits and test results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum Warning {
    /// A linear fit produced a scale estimate that is zero or negative.
    NonPositiveScale { sigma: f64 },
    /// Several grid levels map to the same order statistic.
    DegenerateGrid { duplicates: usize },
    /// `n * p < 1` for a level; the first order statistic was used.
    RankClamped { level: f64 },
    /// More than 10% of bootstrap replicates failed and were dropped.
    BootstrapDegenerate { failed: usize, requested: usize },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::NonPositiveScale { sigma } => {
                write!(f, "non-positive scale estimate {sigma}")
            }
            Warning::DegenerateGrid { duplicates } => {
                write!(
                    f,
                    "{duplicates} grid level(s) share an order statistic with a neighbour"
                )
            }
            Warning::RankClamped { level } => {
                write!(
                    f,
                    "level {level} lies below the first order statistic; rank clamped to 1"
                )
            }
            Warning::BootstrapDegenerate { failed, requested } => {
                write!(
                    f,
                    "{failed} of {requested} bootstrap replicates failed to fit"
                )
            }
        }
    }
}
