use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Adaptive quadrature ran out of subdivisions before meeting its tolerance.
    #[error("quadrature did not converge: estimate {estimate:e}, error estimate {error_estimate:e} after {subdivisions} subdivisions")]
    NonConvergence {
        estimate: f64,
        error_estimate: f64,
        subdivisions: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    /// Truncation or sampling budget too small for the requested accuracy.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// A user supplied atom window does not certify the tail tolerance.
    #[error("atom window [{k_min}, {k_max}] too small: uncovered tail mass {tail:e}")]
    WindowTooSmall { k_min: u64, k_max: u64, tail: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
