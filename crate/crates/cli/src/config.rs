//! Scenario files: one TOML document per run.

use std::fs;
use std::path::{Path, PathBuf};

use maxsch_core::{Exchange, PhysicalParams, PicardConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Largest `M^{3N}` accepted; one state at this size is 256 MiB.
pub const MAX_STATE_POINTS: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    /// Seed for randomized generators.
    #[serde(default)]
    pub seed: u64,
    /// Output directory; defaults to `out/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Time to cover with chained Picard segments; defaults to one horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_time: Option<f64>,
    pub physics: Physics,
    pub grid: Grid,
    pub psi: PsiSpec,
    #[serde(default)]
    pub field: FieldSpec,
    #[serde(default)]
    pub picard: PicardConfig,
    #[serde(default)]
    pub emit: Emit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub c: f64,
    pub masses: Vec<f64>,
    pub charges: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    /// Points per axis, a power of two.
    pub points: usize,
    /// Box side length.
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "lowercase", deny_unknown_fields)]
pub enum PsiSpec {
    /// Product of one Gaussian packet per particle.
    Gaussian {
        packets: Vec<Packet>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        symmetry: Option<Exchange>,
    },
    /// Random coefficients on the modes with every `|n_i| <= max_mode`.
    Random {
        #[serde(default = "default_max_mode")]
        max_mode: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        symmetry: Option<Exchange>,
    },
    /// A wavefunction snapshot, path relative to the config file.
    Snapshot { path: PathBuf },
}

fn default_max_mode() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packet {
    pub center: [f64; 3],
    pub width: f64,
    #[serde(default)]
    pub momentum: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldSpec {
    #[default]
    Zero,
    /// Sum of transverse modes `amplitude * polarization * cos(k·x + phase)`.
    Modes { modes: Vec<FieldMode> },
    /// A field snapshot holding `A` and `∂_t A`.
    Snapshot { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMode {
    /// Integer wave vector `n`, with `k = 2π n / L`.
    pub wavevector: [i32; 3],
    /// Must be orthogonal to `n`; normalized on use.
    pub polarization: [f64; 3],
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub slot: Slot,
}

/// Which initial field a mode contributes to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    /// `A(0)`
    #[default]
    A,
    /// `∂_t A(0)`
    Adot,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Emit {
    /// Final-state snapshots; off by default since 6D states are large.
    pub snapshots: bool,
    pub convergence: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Self {
            snapshots: false,
            convergence: true,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msgs) => CliError::Config(
                msgs.into_iter()
                    .map(|m| format!("{}: {m}", path.display()))
                    .collect(),
            ),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn n_particles(&self) -> usize {
        self.physics.masses.len()
    }

    pub fn params(&self) -> Result<PhysicalParams, CliError> {
        let p = &self.physics;
        PhysicalParams::new(p.hbar, p.c, p.masses.clone(), p.charges.clone())
            .map_err(|e| CliError::config(e.to_string()))
    }

    pub fn total_time(&self) -> f64 {
        self.total_time.unwrap_or(self.picard.horizon)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| Path::new("out").join(&self.name))
    }

    /// Checks everything that can be checked without allocating a state;
    /// all problems are reported together. `base` resolves snapshot paths.
    pub fn validate(&self, base: &Path) -> Result<(), CliError> {
        let mut problems = Vec::new();
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            problems.push(format!(
                "name {:?} must be non-empty and use only letters, digits, '-' and '_'",
                self.name
            ));
        }
        let n = self.n_particles();
        if let Err(CliError::Config(msgs)) = self.params() {
            problems.extend(msgs.into_iter().map(|m| format!("physics: {m}")));
        }

        let Grid { points, length } = self.grid;
        if points < 4 || !points.is_power_of_two() {
            problems.push(format!("grid.points must be a power of two >= 4, got {points}"));
        }
        if !(length > 0.0 && length.is_finite()) {
            problems.push(format!("grid.length must be positive, got {length}"));
        }
        if n > 0 && points >= 4 {
            let size = (points as u128).checked_pow(3 * n as u32);
            if size.is_none_or(|s| s > MAX_STATE_POINTS as u128) {
                problems.push(format!(
                    "grid.points = {points} with N = {n} exceeds {MAX_STATE_POINTS} state points"
                ));
            }
        }

        if let Err(e) = self.picard.validate() {
            problems.push(format!("picard: {e}"));
        }
        if let Some(t) = self.total_time {
            if !(t > 0.0 && t.is_finite()) {
                problems.push(format!("total_time must be positive, got {t}"));
            }
        }

        let check_symmetry = |problems: &mut Vec<String>, symmetry: &Option<Exchange>| {
            if symmetry.is_some() {
                let p = &self.physics;
                if n != 2 {
                    problems.push(format!("psi.symmetry needs N = 2, got N = {n}"));
                } else if p.masses[0] != p.masses[1] || p.charges.first() != p.charges.get(1) {
                    problems.push("psi.symmetry needs identical masses and charges".into());
                }
            }
        };
        match &self.psi {
            PsiSpec::Gaussian { packets, symmetry } => {
                if packets.len() != n {
                    problems.push(format!(
                        "psi.packets has {} entries for N = {n} particles",
                        packets.len()
                    ));
                }
                for (j, p) in packets.iter().enumerate() {
                    if !(p.width > 0.0 && p.width.is_finite()) {
                        problems.push(format!("psi.packets[{j}].width must be positive"));
                    }
                    if !p.center.iter().chain(&p.momentum).all(|v| v.is_finite()) {
                        problems.push(format!("psi.packets[{j}] has non-finite entries"));
                    }
                }
                check_symmetry(&mut problems, symmetry);
            }
            PsiSpec::Random { max_mode, symmetry } => {
                if *max_mode == 0 || 2 * max_mode >= points {
                    problems.push(format!(
                        "psi.max_mode must lie in 1..{}, got {max_mode}",
                        points / 2
                    ));
                }
                check_symmetry(&mut problems, symmetry);
            }
            PsiSpec::Snapshot { path } => {
                if !base.join(path).is_file() {
                    problems.push(format!("psi snapshot {} not found", base.join(path).display()));
                }
            }
        }

        match &self.field {
            FieldSpec::Zero => {}
            FieldSpec::Modes { modes } => {
                for (i, m) in modes.iter().enumerate() {
                    let nn = m.wavevector;
                    if nn.iter().any(|v| 2 * v.unsigned_abs() as usize >= points) {
                        problems.push(format!(
                            "field.modes[{i}].wavevector {nn:?} is not resolved by {points} points"
                        ));
                    }
                    let pol = m.polarization;
                    let pn = pol.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let kn = nn.iter().map(|v| (v * v) as f64).sum::<f64>().sqrt();
                    let dot: f64 = (0..3).map(|a| pol[a] * nn[a] as f64).sum();
                    if !(pn > 0.0 && pn.is_finite()) {
                        problems.push(format!("field.modes[{i}].polarization must be non-zero"));
                    } else if dot.abs() > 1e-12 * pn * kn {
                        problems.push(format!(
                            "field.modes[{i}] is not transverse: polarization {pol:?} is not orthogonal to {nn:?}"
                        ));
                    }
                    if !m.amplitude.is_finite() || !m.phase.is_finite() {
                        problems.push(format!("field.modes[{i}] has non-finite amplitude or phase"));
                    }
                }
            }
            FieldSpec::Snapshot { path } => {
                if !base.join(path).is_file() {
                    problems.push(format!("field snapshot {} not found", base.join(path).display()));
                }
            }
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems))
        }
    }
}
