use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mode index {mode} out of range for a {modes}-mode state")]
    ModeOutOfRange { mode: usize, modes: usize },

    #[error("matrix is not a valid covariance matrix: {0}")]
    InvalidMatrix(String),

    #[error("state is unphysical: smallest symplectic eigenvalue {nu} < 1 - {tolerance}")]
    Unphysical { nu: f64, tolerance: f64 },

    #[error("quadrature did not converge: estimated error {error_estimate:e} > target {target:e}")]
    Quadrature { error_estimate: f64, target: f64 },

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("bisection premise violated: {0}")]
    NonMonotone(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
