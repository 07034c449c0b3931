use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("quadrature did not converge: estimated error {achieved:.3e} > requested {requested:.3e} (value {value})")]
    Quadrature {
        value: f64,
        achieved: f64,
        requested: f64,
    },

    #[error("resolvent is singular at omega = {0} (all decay rates are zero and omega hits an eigenvalue)")]
    Pole(f64),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("step size underflow at t = {last_good_time}")]
    StepUnderflow { last_good_time: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of a numerical routine, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. } | Error::Pole(_) | Error::StepUnderflow { .. } | Error::Structural(_)
        )
    }
}
