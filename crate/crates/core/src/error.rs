use thiserror::Error;

use crate::qla::Role;

/// Errors raised by the numerical kernel and the cycle engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("resource limit: total dimension {requested} exceeds the configured maximum {max}")]
    ResourceLimit { requested: usize, max: usize },

    #[error("unknown subsystem {0:?}")]
    UnknownSubsystem(Role),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("operator is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("non-finite value produced: {0}")]
    NonFinite(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("all measurement outcomes fall below the probability floor")]
    DegenerateMeasurement,

    #[error("theorem check `{check}` failed: value {value:.6e} (tolerance {tolerance:.1e})")]
    TheoremViolation {
        check: &'static str,
        value: f64,
        tolerance: f64,
    },

    #[error("linear algebra failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
