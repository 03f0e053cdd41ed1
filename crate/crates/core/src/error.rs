use thiserror::Error;

/// Failures of the numerical kernels (factorizations, optimizers, quadrature).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericalError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("symmetric factorization failed after {attempts} attempts with escalating jitter")]
    FactorizationFailed { attempts: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("marginal variance {value} is negative beyond round-off")]
    NegativeVariance { value: f64 },
    #[error("optimizer did not converge in any of {restarts} restarts")]
    OptimizerFailed { restarts: usize },
    #[error("design matrix for participant {participant} is rank deficient")]
    RankDeficient { participant: String },
}

/// An input outside the documented domain of an operation.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{what} = {value} is outside [{lo}, {hi}]")]
pub struct DomainError {
    pub what: &'static str,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl DomainError {
    pub fn check(what: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), DomainError> {
        if value.is_nan() || value < lo || value > hi {
            Err(DomainError { what, value, lo, hi })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Numerical(#[from] NumericalError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
