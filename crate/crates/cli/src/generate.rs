//! Initial-data generators named in scenario files.

use std::f64::consts::PI;
use std::path::Path;

use maxsch_core::{
    exchange_symmetrize, normalize, project, Exchange, InitialData, ScalarField, Snapshot,
    SpectralGrid, VectorField, WaveFunction, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{FieldMode, FieldSpec, Packet, PsiSpec, RunConfig, Slot};
use crate::error::CliError;

/// Builds `(psi0, A0, A1)` from a validated config.
pub fn initial_data(config: &RunConfig, base: &Path, seed: u64) -> Result<InitialData, CliError> {
    let n = config.n_particles();
    let grid = SpectralGrid::new(config.grid.points, config.grid.length, 3 * n)?;
    let grid3 = grid.with_dimension(3)?;
    let psi = match &config.psi {
        PsiSpec::Gaussian { packets, symmetry } => with_symmetry(gaussian_product(&grid, packets)?, *symmetry)?,
        PsiSpec::Random { max_mode, symmetry } => {
            with_symmetry(random_state(&grid, *max_mode, seed)?, *symmetry)?
        }
        PsiSpec::Snapshot { path } => {
            let psi = Snapshot::read(&base.join(path))?.into_wavefunction()?;
            expect_grid(psi.grid(), &grid, "psi snapshot")?;
            psi
        }
    };
    let (a0, a1) = match &config.field {
        FieldSpec::Zero => (VectorField::zeros(grid3.clone())?, VectorField::zeros(grid3)?),
        FieldSpec::Modes { modes } => (
            mode_sum(&grid3, modes.iter().filter(|m| m.slot == Slot::A))?,
            mode_sum(&grid3, modes.iter().filter(|m| m.slot == Slot::Adot))?,
        ),
        FieldSpec::Snapshot { path } => {
            let state = Snapshot::read(&base.join(path))?.into_field_state()?;
            expect_grid(state.grid(), &grid3, "field snapshot")?;
            (state.a, state.adot)
        }
    };
    InitialData::new(psi, a0, a1).map_err(|e| CliError::config(format!("initial data: {e}")))
}

fn expect_grid(found: &SpectralGrid, want: &SpectralGrid, what: &str) -> Result<(), CliError> {
    if found == want {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "{what} grid ({} points, L = {}, dimension {}) does not match the configured grid",
            found.points_per_axis(),
            found.box_length(),
            found.dimension()
        )))
    }
}

fn with_symmetry(psi: WaveFunction, symmetry: Option<Exchange>) -> Result<WaveFunction, CliError> {
    Ok(match symmetry {
        Some(parity) => exchange_symmetrize(&psi, parity)?,
        None => psi,
    })
}

/// `prod_j exp(-|x_j - c_j|²/(2 w_j²) + i p_j·x_j)`, normalized. Distances
/// are periodic so packets near the box edge stay smooth.
pub fn gaussian_product(grid: &SpectralGrid, packets: &[Packet]) -> Result<WaveFunction, CliError> {
    let l = grid.box_length();
    let wrap = |d: f64| d - l * (d / l).round();
    let f = ScalarField::from_fn(grid.clone(), |x| {
        let mut out = C64::new(1.0, 0.0);
        for (j, p) in packets.iter().enumerate() {
            let xj = &x[3 * j..3 * j + 3];
            let r2: f64 = (0..3).map(|a| wrap(xj[a] - p.center[a]).powi(2)).sum();
            let phase: f64 = (0..3).map(|a| p.momentum[a] * xj[a]).sum();
            out *= C64::from_polar((-r2 / (2.0 * p.width * p.width)).exp(), phase);
        }
        out
    });
    Ok(normalize(&WaveFunction::new(f)?)?)
}

/// Uniform random complex coefficients on every mode with all
/// `|n_i| <= max_mode`, visited in a fixed order so a seed fixes the state.
pub fn random_state(grid: &SpectralGrid, max_mode: usize, seed: u64) -> Result<WaveFunction, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = grid.points_per_axis();
    let d = grid.dimension();
    let side = 2 * max_mode + 1;
    let mut hat = vec![C64::new(0.0, 0.0); grid.len()];
    for code in 0..side.pow(d as u32) {
        let mut flat = 0;
        let mut rest = code;
        for _ in 0..d {
            let n = (rest % side) as i64 - max_mode as i64;
            rest /= side;
            flat = flat * m + n.rem_euclid(m as i64) as usize;
        }
        hat[flat] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    Ok(normalize(&WaveFunction::new(ScalarField::from_spectrum(grid.clone(), hat)?)?)?)
}

/// Sum of `amplitude * e * cos(k·x + phase)`, `e` the unit polarization.
/// The modes are transverse by validation; the projection only removes
/// grid roundoff.
pub fn mode_sum<'a>(grid: &SpectralGrid, modes: impl Iterator<Item = &'a FieldMode>) -> Result<VectorField, CliError> {
    let w = 2.0 * PI / grid.box_length();
    let modes: Vec<&FieldMode> = modes.collect();
    if modes.is_empty() {
        return Ok(VectorField::zeros(grid.clone())?);
    }
    let v = VectorField::from_fn(grid.clone(), |x| {
        let mut out = [0.0; 3];
        for m in &modes {
            let norm = m.polarization.iter().map(|v| v * v).sum::<f64>().sqrt();
            let arg: f64 = (0..3).map(|a| w * m.wavevector[a] as f64 * x[a]).sum::<f64>() + m.phase;
            let s = m.amplitude * arg.cos() / norm;
            for a in 0..3 {
                out[a] += s * m.polarization[a];
            }
        }
        out
    })?;
    Ok(project(&v)?)
}
