use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// An iterative solver ran out of budget. `residual` is the norm of the
    /// last update or time derivative that failed the tolerance.
    #[error("convergence failure: {message} (residual {residual:e})")]
    ConvergenceFailure { message: String, residual: f64 },

    /// No fit start met its convergence criteria; carries the best result.
    #[error("no fit start converged (best distance {:e})", .0.distance)]
    FitNotConverged(Box<crate::fit::FitResult>),

    #[error("size limit: {0}")]
    SizeLimit(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("domain error at line {line}: {message}")]
    Domain { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericFailure(_) | Error::ConvergenceFailure { .. } | Error::FitNotConverged(_)
        )
    }
}
