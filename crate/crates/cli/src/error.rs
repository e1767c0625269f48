use std::path::PathBuf;

use maxsch_core::Error as SolverError;

/// Process exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    /// I/O and other failures outside the solver.
    pub const INTERNAL: u8 = 1;
    pub const CONFIG: u8 = 2;
    /// The Picard map did not contract, even after shrinking the horizon.
    pub const NON_CONTRACTION: u8 = 3;
    pub const ITERATION_LIMIT: u8 = 4;
    /// Non-finite values, Krylov failure or other numerical breakdown.
    pub const NUMERICAL: u8 = 5;
    pub const VERIFY_FAILED: u8 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} verification check(s) failed")]
    VerifyFailed(usize),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![msg.into()])
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::INTERNAL,
            CliError::VerifyFailed(_) => exit::VERIFY_FAILED,
            CliError::Solver(e) => match e.root() {
                SolverError::HorizonTooLarge { .. } | SolverError::HorizonFloor { .. } => {
                    exit::NON_CONTRACTION
                }
                SolverError::IterationLimit { .. } => exit::ITERATION_LIMIT,
                SolverError::NonFinite { .. }
                | SolverError::NonReal { .. }
                | SolverError::KrylovFailure { .. }
                | SolverError::ZeroState(_) => exit::NUMERICAL,
                SolverError::InvalidGrid(_)
                | SolverError::GridMismatch(_)
                | SolverError::InvalidArgument(_) => exit::CONFIG,
                _ => exit::INTERNAL,
            },
        }
    }
}
