use thiserror::Error;

use crate::sdp::SolveStatus;

/// Errors produced anywhere in the synthesis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain mismatch: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("system is unstable (spectral abscissa/radius {0:.6e})")]
    Unstable(f64),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("semidefinite backend failure: {0}")]
    Backend(String),

    #[error(
        "relaxed program is infeasible ({0}); mu may be too small or the pattern too restrictive"
    )]
    InfeasibleRelaxation(String),

    #[error(
        "inner program certified infeasible at outer iteration {iteration} ({stage}): {status:?}"
    )]
    InnerInfeasible {
        iteration: usize,
        stage: &'static str,
        status: SolveStatus,
    },

    #[error(
        "no convergence after {iterations} outer iterations (best min eig(F) = {best_margin:.3e})"
    )]
    NoConvergence { iterations: usize, best_margin: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("parse error in {field}: {message}")]
    Parse { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
