use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use maxsch_cli::{exit, info, report_status, run_file, verify_suite, CliError, Fault, RunOptions, Suite};

/// Maxwell–Schrödinger solver.
#[derive(Parser)]
#[command(name = "maxsch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario file and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory (overrides the file).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for randomized generators (overrides the file).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the built-in invariant checks.
    Verify {
        /// Suites to run, comma separated; all when omitted.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        subset: Option<Vec<Suite>>,
        /// Corrupt the input on purpose to show a failing check.
        #[arg(long)]
        inject_fault: Option<Fault>,
    },
    /// Describe a snapshot header and payload.
    Info { snapshot: PathBuf },
}

fn threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MAXSCH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::config(format!("MAXSCH_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    threads()?;
    match cli.command {
        Command::Run { config, out, seed } => {
            let summary = run_file(&config, &RunOptions { output: out, seed })?;
            println!(
                "{}: t = {} in {} segment(s), iterations {:?}, max L2 drift {:.2e}, max div {:.2e}",
                summary.name,
                summary.end_time,
                summary.segments,
                summary.iterations,
                summary.max_l2_drift,
                summary.max_div_residual
            );
            println!("wrote {}", summary.output.display());
            Ok(())
        }
        Command::Verify { subset, inject_fault } => {
            let suites = subset.unwrap_or_else(|| Suite::ALL.to_vec());
            let report = verify_suite(&suites, inject_fault);
            println!("{report}");
            report_status(&report)
        }
        Command::Info { snapshot } => {
            println!("{}", info::describe(&snapshot)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
