//! Error type shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("insufficient records: need at least {needed} lower k-records, got {got}")]
    InsufficientRecords { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("ill-conditioned computation: {0}")]
    Conditioning(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e}, alpha {alpha:.6}, theta {theta:.6})")]
    Optimization {
        iterations: usize,
        gradient_norm: f64,
        alpha: f64,
        theta: f64,
    },

    #[error("quantile table has no entry for probability {0}")]
    MissingQuantile(f64),

    #[error("quantile table is for (k={table_k}, theta={table_theta}, n={table_n}) but the estimator is for (k={k}, theta={theta}, n={n})")]
    TableMismatch {
        table_k: usize,
        table_theta: f64,
        table_n: usize,
        k: usize,
        theta: f64,
        n: usize,
    },

    #[error("pivot {pivot} cannot be used for {target}")]
    WrongPivot { pivot: String, target: &'static str },

    #[error("interval bound undefined: 1 + scale * q is not positive for quantile {0}")]
    UndefinedBound(f64),

    #[error("correlation undefined: zero variance")]
    UndefinedCorrelation,

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Conditioning(_)
                | Error::Optimization { .. }
                | Error::UndefinedBound(_)
                | Error::UndefinedCorrelation
        )
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
