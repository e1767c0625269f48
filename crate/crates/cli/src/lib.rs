//! Command-line front end: scenario files, runs, verification and snapshot
//! inspection.

pub mod config;
pub mod error;
pub mod generate;
pub mod info;
pub mod run;
pub mod verify;

pub use config::RunConfig;
pub use error::{exit, CliError};
pub use run::{run_file, run_scenario, RunOptions, RunSummary};
pub use verify::{report_status, verify_suite, Check, Fault, Report, Suite};
