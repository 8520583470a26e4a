//! Error type shared by the whole crate.

/// Errors reported by field operations, solvers and steppers.
///
/// Measured quantities are carried as f64 regardless of the working scalar
/// so the error type stays non-generic.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid input for {what}: {why}")]
    InvalidInput { what: &'static str, why: String },

    /// A zero-mean precondition was violated (inverse Laplacian, CG right-hand side).
    #[error("{what} requires a zero-mean field: measured mean {mean:e} exceeds tolerance {tol:e}")]
    NonZeroMean {
        what: &'static str,
        mean: f64,
        tol: f64,
    },

    #[error(
        "conjugate gradient did not converge: residual {residual:e} (target {target:e}) after {iterations} iterations"
    )]
    SolverFailure {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    /// Post-step self-check of the scheme equations failed.
    #[error("scheme consistency check failed at step {step}: {what} residual {residual:e} exceeds {bound:e}")]
    Consistency {
        step: usize,
        what: &'static str,
        residual: f64,
        bound: f64,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
