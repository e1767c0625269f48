use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_maxsch"));
    cmd.env("RUST_LOG", "warn").env_remove("MAXSCH_THREADS");
    cmd
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("spawn maxsch")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Diagnostics CSV as (header, rows), skipping the schema comment.
fn diagnostics(dir: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
    assert!(text.starts_with("# maxsch diagnostics schema"));
    let body = text.split_once('\n').unwrap().1;
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(dir: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = diagnostics(dir);
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().filter_map(|r| r[i].parse().ok()).collect()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("case.toml");
    fs::write(&path, text).unwrap();
    path
}

const RANDOM: &str = r#"
name = "random"
total_time = 0.5

[physics]
masses = [1.0]
charges = [1.0]

[grid]
points = 8
length = 8.0

[psi]
generator = "random"
max_mode = 2

[field]
generator = "modes"
modes = [{ wavevector = [1, 0, 0], polarization = [0.0, 1.0, 0.0], amplitude = 0.1 }]

[picard]
horizon = 0.5
intervals = 4
"#;

#[test]
fn free_particle_conserves_the_norm() {
    let tmp = TempDir::new().unwrap();
    let out = run(&scenario("free-particle.toml"), tmp.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let drift = column(tmp.path(), "l2_drift");
    assert_eq!(drift.len(), 17);
    assert!(drift.iter().all(|d| *d <= 1e-8), "{drift:?}");
    for f in ["config.toml", "diagnostics.csv", "convergence-00.csv", "summary.json"] {
        assert!(tmp.path().join(f).is_file(), "{f} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["segments"], 1);
    assert_eq!(summary["end_time"], 1.0);
}

#[test]
fn n2_fermion_stays_antisymmetric() {
    let tmp = TempDir::new().unwrap();
    let out = run(&scenario("n2-fermion.toml"), tmp.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sym = column(tmp.path(), "symmetry_residual");
    assert_eq!(sym.len(), 5);
    assert!(sym.iter().all(|s| *s <= 1e-7), "{sym:?}");
    assert!(column(tmp.path(), "l2_drift").iter().all(|d| *d <= 1e-8));
}

#[test]
fn odd_grid_is_a_config_error_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), &RANDOM.replace("points = 8", "points = 7"));
    let dest = tmp.path().join("out");
    let out = run(&config, &dest, &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("power of two"), "{}", stderr(&out));
    assert!(!dest.exists());
}

#[test]
fn config_problems_are_reported_together() {
    let tmp = TempDir::new().unwrap();
    let text = RANDOM
        .replace("points = 8", "points = 12")
        .replace("polarization = [0.0, 1.0, 0.0]", "polarization = [1.0, 0.0, 0.0]");
    let out = run(&write_config(tmp.path(), &text), &tmp.path().join("out"), &[]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("power of two") && err.contains("not transverse"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let text = RANDOM.replace("intervals = 4", "intervals = 4\ndt = 0.1");
    let out = run(&write_config(tmp.path(), &text), &tmp.path().join("out"), &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("dt"), "{}", stderr(&out));
}

#[test]
fn missing_config_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(&tmp.path().join("nope.toml"), &tmp.path().join("out"), &[]);
    assert_eq!(code(&out), 1);
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let out = bin().env("MAXSCH_THREADS", "zero").args(["verify", "--subset"]).output().unwrap();
    assert_eq!(code(&out), 2);
}

/// Wall time is the only column allowed to differ between identical runs.
fn without_wall_time(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

#[test]
fn a_seed_reproduces_a_run_bit_for_bit() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), RANDOM);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(code(&run(&config, &a, &["--seed", "3"])), 0);
    let out = bin()
        .env("MAXSCH_THREADS", "2")
        .arg("run")
        .arg(&config)
        .arg("--out")
        .arg(&b)
        .args(["--seed", "3"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(code(&run(&config, &c, &["--seed", "4"])), 0);

    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "diagnostics.csv"), read(&b, "diagnostics.csv"));
    assert_eq!(read(&a, "summary.json").len(), read(&b, "summary.json").len());
    assert_eq!(
        without_wall_time(&a.join("convergence-00.csv")),
        without_wall_time(&b.join("convergence-00.csv"))
    );
    assert_ne!(read(&a, "diagnostics.csv"), read(&c, "diagnostics.csv"));
    let resolved = fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(resolved.contains("seed = 3"), "{resolved}");
}

#[test]
fn strong_coupling_reports_non_contraction() {
    let tmp = TempDir::new().unwrap();
    let text = r#"
name = "strong"
[physics]
masses = [1.0]
charges = [10.0]
[grid]
points = 8
length = 8.0
[psi]
generator = "gaussian"
packets = [{ center = [4.0, 4.0, 4.0], width = 1.0, momentum = [1.0, 0.0, 0.0] }]
[field]
generator = "modes"
modes = [
    { wavevector = [0, 1, 0], polarization = [1.0, 0.0, 0.0], amplitude = 0.1 },
    { wavevector = [1, 0, 0], polarization = [0.0, 0.0, 1.0], amplitude = 0.1, phase = 1.5707963267948966 },
]
[picard]
horizon = 1.0
intervals = 8
min_horizon = 0.9
[picard.stepper]
max_subdivisions = 4
"#;
    let out = run(&write_config(tmp.path(), text), &tmp.path().join("out"), &[]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn iteration_limit_keeps_the_convergence_log() {
    let tmp = TempDir::new().unwrap();
    let text = RANDOM.replace("intervals = 4", "intervals = 4\nmax_iters = 2");
    let dest = tmp.path().join("out");
    let out = run(&write_config(tmp.path(), &text), &dest, &[]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    let log = fs::read_to_string(dest.join("convergence-failed.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
}

#[test]
fn verify_passes_on_a_correct_build() {
    let out = bin().arg("verify").output().unwrap();
    let table = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(code(&out), 0, "{table}");
    assert!(table.contains("0 failed"));
    assert!(!table.contains("FAIL"));
}

#[test]
fn an_injected_fault_fails_verification() {
    let out = bin()
        .args(["verify", "--subset", "helmholtz", "--inject-fault", "divergence"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 6);
    let table = String::from_utf8(out.stdout).unwrap();
    let failing: Vec<_> = table.lines().filter(|l| l.ends_with("FAIL")).collect();
    assert_eq!(failing.len(), 1, "{table}");
    assert!(failing[0].contains("divergence"));
}

#[test]
fn an_empty_subset_is_an_empty_pass() {
    let out = bin().args(["verify", "--subset"]).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8(out.stdout).unwrap().contains("0 checks"));
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let out = bin().args(["verify", "--subset", "plots"]).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn info_describes_snapshots() {
    let tmp = TempDir::new().unwrap();
    let text = RANDOM.replace("[picard]", "[emit]\nsnapshots = true\n\n[picard]");
    let dest = tmp.path().join("out");
    let out = run(&write_config(tmp.path(), &text), &dest, &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = bin().arg("info").arg(dest.join("psi-final.json")).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Wavefunction") && text.contains("time        0.5"), "{text}");
    let norm: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("L2 norm"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((norm - 1.0).abs() < 1e-8);

    let out = bin().arg("info").arg(dest.join("field-final.json")).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8(out.stdout).unwrap().contains("div residual"));

    let out = bin().arg("info").arg(tmp.path().join("missing.json")).output().unwrap();
    assert_ne!(code(&out), 0);
}
