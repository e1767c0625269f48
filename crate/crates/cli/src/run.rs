//! `maxsch run`: solve a scenario and write its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use maxsch_core::diagnostics::column_max;
use maxsch_core::snapshot::write_atomic;
use maxsch_core::{
    adaptive_horizon, diagnose, write_diagnostics_csv, ConvergenceLog, Error as SolverError,
    ShrinkEvent, Snapshot,
};
use serde::Serialize;

use crate::config::{PsiSpec, RunConfig};
use crate::error::CliError;
use crate::generate::initial_data;

/// Command-line overrides; nothing else may override the file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub output: PathBuf,
    pub end_time: f64,
    pub horizon: f64,
    pub segments: usize,
    pub iterations: Vec<usize>,
    pub shrink_events: Vec<ShrinkEvent>,
    pub max_l2_drift: f64,
    pub max_div_residual: f64,
    pub max_symmetry_residual: Option<f64>,
    pub max_schrodinger_residual: Option<f64>,
    pub max_kg_residual: Option<f64>,
    pub files: Vec<String>,
}

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Name of the convergence log of segment `k`.
pub fn convergence_file(k: usize) -> String {
    format!("convergence-{k:02}.csv")
}

fn write(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<String>) -> Result<(), CliError> {
    write_atomic(&dir.join(name), bytes)?;
    files.push(name.to_string());
    Ok(())
}

fn log_csv(log: &ConvergenceLog) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    log.write_csv(&mut buf)?;
    Ok(buf)
}

/// Loads `path`, runs it and writes the artifacts.
pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let config = RunConfig::load(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    run_scenario(&config, base, opts)
}

/// Validates, solves with adaptive horizons, and writes the diagnostics and
/// convergence CSVs, the resolved config and a summary. Nothing is written
/// if the config is rejected.
pub fn run_scenario(config: &RunConfig, base: &Path, opts: &RunOptions) -> Result<RunSummary, CliError> {
    config.validate(base)?;
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(out) = &opts.output {
        config.output = Some(out.clone());
    }
    let params = config.params()?;
    let init = initial_data(&config, base, config.seed)?;
    let dir = config.output_dir();

    let start = Instant::now();
    log::info!("{}: solving to t = {}", config.name, config.total_time());
    let outcome = match adaptive_horizon(&init, &params, &config.picard, config.total_time()) {
        Ok(o) => o,
        Err(e) => {
            // keep the log of a run that stalled so it can be inspected
            if let SolverError::IterationLimit { log, .. } = e.root() {
                fs::create_dir_all(&dir).map_err(|err| CliError::io(&dir, err))?;
                write_atomic(&dir.join("convergence-failed.csv"), &log_csv(log)?)?;
            }
            return Err(e.into());
        }
    };
    let traj = outcome.stitched()?;
    log::info!(
        "{}: {} segment(s) in {:.1}s",
        config.name,
        outcome.segments.len(),
        start.elapsed().as_secs_f64()
    );

    let parity = match &config.psi {
        PsiSpec::Gaussian { symmetry, .. } | PsiSpec::Random { symmetry, .. } => *symmetry,
        PsiSpec::Snapshot { .. } => None,
    };
    let records = diagnose(&traj, &params, &config.picard.coulomb, parity)?;

    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut files = Vec::new();
    write(&dir, CONFIG_FILE, config.to_toml().as_bytes(), &mut files)?;
    let mut csv = Vec::new();
    write_diagnostics_csv(&records, &mut csv)?;
    write(&dir, DIAGNOSTICS_FILE, &csv, &mut files)?;
    if config.emit.convergence {
        for (k, seg) in outcome.segments.iter().enumerate() {
            write(&dir, &convergence_file(k), &log_csv(&seg.log)?, &mut files)?;
        }
    }
    if config.emit.snapshots {
        let t = traj.times().end();
        Snapshot::of_wavefunction(traj.last_psi(), t, Some(&params)).write(&dir.join("psi-final.json"))?;
        Snapshot::of_field(traj.last_field(), t).write(&dir.join("field-final.json"))?;
        files.extend(["psi-final.json", "psi-final.bin", "field-final.json", "field-final.bin"].map(String::from));
    }

    let max = |pick: fn(&maxsch_core::DiagnosticsRecord) -> Option<f64>| column_max(&records, pick);
    let mut summary = RunSummary {
        name: config.name.clone(),
        seed: config.seed,
        output: dir.clone(),
        end_time: outcome.end_time(),
        horizon: outcome.horizon,
        segments: outcome.segments.len(),
        iterations: outcome.segments.iter().map(|s| s.log.iterations()).collect(),
        shrink_events: outcome.shrink_events.clone(),
        max_l2_drift: max(|r| Some(r.l2_drift)).unwrap_or(0.0),
        max_div_residual: max(|r| Some(r.div_residual_a.max(r.div_residual_adot))).unwrap_or(0.0),
        max_symmetry_residual: max(|r| r.symmetry_residual),
        max_schrodinger_residual: max(|r| r.schrodinger_residual),
        max_kg_residual: max(|r| r.kg_residual),
        files,
    };
    summary.files.push(SUMMARY_FILE.into());
    let json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    write_atomic(&dir.join(SUMMARY_FILE), &json)?;
    Ok(summary)
}
