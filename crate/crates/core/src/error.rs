//! Crate-wide error type.

/// Errors reported by the solver library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A coefficient violated its admissibility condition (for example a
    /// non-positive surface density μ).
    #[error("coefficient violation: {0}")]
    Coefficient(String),

    /// An iterative solver failed to converge; carries the final residual.
    #[error("solver failure: {context} (residual {residual:.3e} after {iterations} iterations)")]
    SolverFailure {
        context: String,
        residual: f64,
        iterations: usize,
    },

    /// Newton iteration for a semi-linear step did not converge.
    #[error("Newton iteration failed at step {step} (t = {time}): residual {residual:.3e} after {iterations} iterations")]
    NewtonFailure {
        step: usize,
        time: f64,
        residual: f64,
        iterations: usize,
    },

    /// Problem sizes exceed a documented dense-fallback or surrogate limit.
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    /// Configuration or input-format error (carries file/line context when
    /// it stems from a parsed file).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input/output failure while reading or writing meshes, matrices or
    /// reports.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for [`Error::InvalidArgument`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Shorthand for [`Error::Config`].
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
