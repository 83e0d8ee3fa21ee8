use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid model, cost or configuration input.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Quadrature or tail truncation failed to reach the requested accuracy.
    #[error("numeric failure: {what} (achieved error estimate {achieved:e})")]
    NumericFailure { what: String, achieved: f64 },

    /// A search grid was too small for the quantity being resolved.
    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("bracketing failed: {0}")]
    Bracketing(String),

    #[error("certificate failure: {0}")]
    Certificate(String),

    #[error("simulation failure at step {step}: {reason}")]
    Simulation { step: u64, reason: String },

    #[error("coupling failure at step {step}: Z_j = {truncated}, Z = {base}")]
    Coupling {
        step: u64,
        truncated: f64,
        base: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn numeric(what: impl Into<String>, achieved: f64) -> Self {
        Error::NumericFailure {
            what: what.into(),
            achieved,
        }
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericFailure { .. }
                | Error::Resolution(_)
                | Error::Bracketing(_)
                | Error::Simulation { .. }
                | Error::Coupling { .. }
                | Error::InsufficientData(_)
        )
    }
}
