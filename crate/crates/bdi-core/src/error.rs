use thiserror::Error;

/// Errors produced by table construction, PGF evaluation and PMF inversion.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} outside table range [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergent(String),

    #[error("numerical identity violated: {what} (residual {residual:e})")]
    IdentityViolation { what: String, residual: f64 },

    #[error("PMF inversion produced negative mass {value:e} at k = {k}")]
    NegativeMass { k: usize, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
