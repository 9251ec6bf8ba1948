use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("non-finite value at step {step} on path {path}")]
    BlowUp { step: usize, path: usize },

    #[error("regression at step {step} is singular (condition number {condition:.3e})")]
    SingularRegression { step: usize, condition: f64 },

    #[error("quadratic regime failure at step {step}: {detail}")]
    RegimeFailure { step: usize, detail: String },

    #[error("Picard iteration is not contracting: {ratios:?}")]
    Divergence { ratios: Vec<f64> },

    #[error("nested Monte Carlo budget exceeded: {required} evaluations > {budget}")]
    BudgetExceeded { required: u64, budget: u64 },

    #[error("exponent overflow: {0}")]
    Overflow(String),

    #[error("malformed ensemble file: {0}")]
    Format(String),
}

impl Error {
    /// Numerical failures as opposed to misuse of the API.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. }
                | Error::SingularRegression { .. }
                | Error::RegimeFailure { .. }
                | Error::Divergence { .. }
                | Error::Overflow(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
