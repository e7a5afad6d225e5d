use alloc::string::String;

/// Errors raised by the Gaussian engine and the protocol drivers built on it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("mode `{name}` has negative occupation {value}")]
    NegativeOccupation { name: String, value: f64 },

    #[error("mode name `{0}` appears more than once")]
    DuplicateMode(String),

    #[error("no mode named `{0}` in this state")]
    UnknownMode(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix `{0}` is not symmetric")]
    NotSymmetric(&'static str),

    #[error("noise matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NoiseNotPsd { min_eigenvalue: f64 },

    #[error("covariance violates the uncertainty relation (min eigenvalue {min_eigenvalue:e})")]
    InvalidState { min_eigenvalue: f64 },

    #[error("map is not a valid Gaussian channel: output violates the uncertainty relation (min eigenvalue {min_eigenvalue:e})")]
    InvalidChannel { min_eigenvalue: f64 },

    #[error("measured quadrature has degenerate variance {variance:e}")]
    DegenerateMeasurement { variance: f64 },

    #[error("parameter `{name}` = {value} is out of range: {reason}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("matching condition violated: |eps| = {eps:e} exceeds the declared tolerance {tolerance:e}")]
    MatchingViolated { eps: f64, tolerance: f64 },

    #[error("matching error undefined: both coupling strengths vanish")]
    DegenerateMatching,

    #[error("mode `{0}` has the wrong role for this operation: {1}")]
    WrongRole(String, &'static str),

    #[error("feedback gain is undefined for kappa = 0")]
    UndefinedGain,

    #[error("kappa = 0 carries no readout signal")]
    NoSignal,

    #[error("integration did not converge: halving the step changed `{quantity}` by {change:e} (tolerance {tolerance:e})")]
    ConvergenceFailure {
        quantity: &'static str,
        change: f64,
        tolerance: f64,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    reason: &'static str,
) -> Result<f64> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(value)
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            reason,
        })
    }
}

pub(crate) fn check_nonneg(name: &'static str, value: f64) -> Result<f64> {
    check_range(name, value, 0.0, f64::INFINITY, "must be finite and >= 0")
}
