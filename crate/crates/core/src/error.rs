use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid grid bounds, node counts, windows or flow parameters.
    Config(String),
    /// Two fields live on different grids, or lengths disagree.
    Dimension(String),
    /// An eigen-solve did not converge within its iteration budget.
    Spectral { message: String, residual: f64 },
    /// A modulation fit failed (singular Jacobian or no convergence).
    Fit { message: String, residual: f64 },
    /// Test-profile certificates could not be satisfied.
    Profiles(String),
    /// Not enough trajectory data for a diagnostic.
    Diagnostic(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::Spectral { message, residual } => {
                write!(f, "spectral error: {message} (residual {residual:e})")
            }
            Error::Fit { message, residual } => {
                write!(f, "fit error: {message} (residual {residual:e})")
            }
            Error::Profiles(m) => write!(f, "test-profile construction error: {m}"),
            Error::Diagnostic(m) => write!(f, "diagnostic error: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
