//! Error type shared across the toolkit.
//!
//! Variants are grouped by how the command line maps them to exit codes:
//! input and case-data problems are usage errors, solver and eigenroutine
//! failures are numerical errors.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent case data; the message carries a field path
    /// such as `buses[4].d1` where applicable.
    #[error("case: {0}")]
    Case(String),

    /// Electrical graph violations: bad line data, duplicate pairs, or a
    /// disconnected network.
    #[error("graph: {0}")]
    Graph(String),

    /// Model assembly rejected its inputs (uncalibrated references, rotation
    /// angle out of range, non-physical state).
    #[error("model: {0}")]
    Model(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// Newton iteration exhausted its budget. `trace` holds the residual
    /// max-norm after each iteration so callers can distinguish divergence
    /// from slow convergence; the last iterate rides along for diagnosis.
    #[error("newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
        theta: Vec<f64>,
        v: Vec<f64>,
        omega_s: f64,
    },

    /// The Newton matrix lost rank, which signals a degenerate operating
    /// point rather than a programming error.
    #[error("singular newton matrix at iteration {0} (degenerate operating point)")]
    SingularNewton(usize),

    /// The eigenvalue routine did not converge or an eigenpair failed its
    /// residual check; never silently truncated.
    #[error("eigensolver: {0}")]
    Eigen(String),

    /// Any other numerical failure: NaN in a trajectory, step-size
    /// underflow, and similar.
    #[error("numerical: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for this error: 2 for input/usage problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Case(_) | Error::Graph(_) | Error::Model(_) | Error::Io(_) | Error::Json(_) => 2,
            Error::NonConvergence { .. }
            | Error::SingularNewton(_)
            | Error::Eigen(_)
            | Error::Numerical(_) => 3,
        }
    }
}
