use thiserror::Error;

use crate::coupler::ConvergenceLog;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero state: {0}")]
    ZeroState(String),

    #[error("multiplier produced a non-real vector field (imaginary residue {residue:.3e})")]
    NonReal { residue: f64 },

    #[error(
        "Krylov exponential missed tolerance: estimate {estimate:.3e} at step {step:.3e} after {subdivisions} subdivisions"
    )]
    KrylovFailure {
        estimate: f64,
        step: f64,
        subdivisions: u32,
    },

    #[error("Picard map is not contracting on horizon T = {horizon}")]
    HorizonTooLarge { horizon: f64, log: ConvergenceLog },

    #[error("Picard iteration limit of {iterations} reached (last distance {last_distance:.3e})")]
    IterationLimit {
        iterations: usize,
        last_distance: f64,
        log: ConvergenceLog,
    },

    #[error("adaptive horizon fell below the floor {floor} (last tried {tried})")]
    HorizonFloor { floor: f64, tried: f64 },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips any [`Error::Context`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}
