use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64, last_state: Vec<f64> },

    #[error("step budget of {steps} exhausted at t = {t:e}")]
    StepBudget { steps: usize, t: f64, last_state: Vec<f64> },

    #[error("non-finite state encountered at t = {t:e}")]
    NonFinite { t: f64 },

    #[error("steady state not found: best scaled residual {residual:e} ({detail})")]
    NoConvergence { residual: f64, detail: String },

    #[error("density matrix lost positivity (min eigenvalue {min_eigenvalue:e})")]
    Positivity { min_eigenvalue: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
}
