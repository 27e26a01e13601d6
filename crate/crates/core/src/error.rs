use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge on [{a}, {b}]: estimate {estimate}, error {error}")]
    Quadrature { a: f64, b: f64, estimate: f64, error: f64 },

    #[error("site {index} outside the valid band [{lo}, {hi}]")]
    OutOfBand { index: usize, lo: usize, hi: usize },

    #[error("time step {dt} exceeds the CFL limit {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("simulator audit failed: {0}")]
    Audit(String),

    #[error("no enabled event channel")]
    Absorbing,

    #[error("incompatible fields: {0}")]
    Incompatible(String),

    #[error("state space too large for exact analysis: N = {0}, at most 8")]
    StateSpace(usize),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
