use thiserror::Error;

/// Errors reported by meshes, solvers, oracles and diagnostics.
///
/// Numeric payloads are stored as `f64` regardless of the scalar type the
/// computation ran in, so the error type stays non-generic.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The fixed-point iteration inside an implicit step did not reach the
    /// requested tolerance within the iteration budget.
    #[error("no convergence at step {step} (t = {time}): residual {residual} after {iters} iterations")]
    NoConvergence {
        step: usize,
        time: f64,
        residual: f64,
        iters: usize,
    },

    /// The solution left the trusted range (non-finite or |u| beyond bound).
    #[error("solution blew up at step {step} (t = {time}): max |u| = {max_abs}")]
    BlowUp { step: usize, time: f64, max_abs: f64 },

    /// A diagnostic is undefined for this input (for example coincident
    /// slope extrema). Reported instead of returning an infinity.
    #[error("degenerate diagnostic: {0}")]
    Degenerate(String),

    /// The operation is defined but not supported for this input shape.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A stored file did not match the expected layout.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
