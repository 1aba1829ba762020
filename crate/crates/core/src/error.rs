use thiserror::Error;

/// Failures raised by the numerical and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point lies outside the region")]
    OutsideRegion,

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("no sign change found while bracketing {0}")]
    BracketFailure(&'static str),

    #[error("path exceeded {max_steps} steps without exiting")]
    Truncated { max_steps: usize },

    #[error("walk-on-spheres exceeded {0} jumps")]
    WalkCap(usize),

    #[error("log-domain value {0} is beyond the representable range")]
    Overflow(f64),

    #[error("degenerate regression design: {0}")]
    DegenerateDesign(String),

    #[error("quadrature cross-check failed: closed form {closed} vs quadrature {quadrature}")]
    QuadratureMismatch { closed: f64, quadrature: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
