//! Invariants and PDE residuals along a trajectory.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::fields::{exchange_particles, Exchange, FieldState, PhysicalParams, TrajectoryPair, WaveFunction};
use crate::helmholtz::{curl, divergence_residual};
use crate::klein_gordon::kg_source;
use crate::schrodinger::{CoulombSpec, Hamiltonian};
use crate::spectral::{apply_multiplier, sobolev_norm, VectorField, C64, I};

/// `(1/8π) ∫ |curl A|² + |c⁻¹ ∂_t A|²`.
pub fn field_energy(state: &FieldState, c: f64) -> Result<f64> {
    ensure(c > 0.0, || format!("c must be positive, got {c}"))?;
    let b = curl(&state.a)?.l2_norm();
    let e = state.adot.l2_norm() / c;
    Ok((b * b + e * e) / (8.0 * PI))
}

/// Which form of the Schrödinger equation a trajectory is meant to solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationForm {
    /// Field energy included as a scalar term of the Hamiltonian.
    WithFieldEnergy,
    /// Field energy dropped.
    Reduced,
}

/// Gauge-phase direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeDirection {
    /// Reduced solution to one with the field energy term: `exp(-(i/ħ)∫E)`.
    ToMsp,
    /// Inverse direction: `exp(+(i/ħ)∫E)`.
    ToMspMaerke,
}

/// `∫_0^{t_i} E_EM ds` by the trapezoid rule at every node.
pub fn field_energy_integral(traj: &TrajectoryPair, c: f64) -> Result<Vec<f64>> {
    let energies = traj
        .fields()
        .par_iter()
        .map(|f| field_energy(f, c))
        .collect::<Result<Vec<_>>>()?;
    let dt = traj.times().step;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(energies.len());
    out.push(0.0);
    for w in energies.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    Ok(out)
}

/// Multiplies `psi(t)` by the global phase `exp(∓(i/ħ) ∫_0^t E_EM)`.
pub fn gauge_phase_transform(
    traj: &TrajectoryPair,
    params: &PhysicalParams,
    direction: GaugeDirection,
) -> Result<TrajectoryPair> {
    let integral = field_energy_integral(traj, params.c)?;
    let sign = match direction {
        GaugeDirection::ToMsp => -1.0,
        GaugeDirection::ToMspMaerke => 1.0,
    };
    let psi = traj
        .psi()
        .iter()
        .zip(&integral)
        .map(|(p, phi)| {
            let phase = C64::from_polar(1.0, sign * phi / params.hbar);
            WaveFunction::new(p.field().scaled(phase))
        })
        .collect::<Result<Vec<_>>>()?;
    TrajectoryPair::new(*traj.times(), psi, traj.fields().to_vec())
}

/// `||psi - s psi∘e_12|| / ||psi||`.
pub fn symmetry_residual(psi: &WaveFunction, parity: Exchange) -> Result<f64> {
    let norm = psi.norm();
    if norm == 0.0 {
        return Err(Error::ZeroState("symmetry residual of a zero state".into()));
    }
    ensure(psi.n_particles() == 2, || {
        format!("symmetry residual needs N = 2, got N = {}", psi.n_particles())
    })?;
    let swapped = exchange_particles(psi.field(), 0, 1)?;
    let s = parity.sign();
    Ok(psi.field().zip_with(&swapped, |a, b| a - s * b)?.l2_norm() / norm)
}

/// Normalized residuals at one interior node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeResidual {
    pub index: usize,
    pub time: f64,
    /// `||iħ ∂_t psi - H psi||_{L²} / max_t ||psi||`
    pub schrodinger: f64,
    /// `||c⁻² ∂_t² B - ΔB + B - F||_{H^{-1/2}}` over the field scale.
    pub kg: f64,
}

/// PDE residuals at the interior nodes, time derivatives by centered
/// differences.
pub fn residual_check(
    traj: &TrajectoryPair,
    params: &PhysicalParams,
    spec: &CoulombSpec,
    form: EquationForm,
) -> Result<Vec<NodeResidual>> {
    let h = Hamiltonian::new(traj.psi_grid().clone(), params.clone(), *spec)?;
    residuals_with(&h, traj, form)
}

pub(crate) fn residuals_with(
    h: &Hamiltonian,
    traj: &TrajectoryPair,
    form: EquationForm,
) -> Result<Vec<NodeResidual>> {
    let n = traj.len();
    ensure(n >= 3, || format!("residuals need at least 3 time nodes, got {n}"))?;
    let params = h.params();
    let dt = traj.times().step;
    let psi = traj.psi();
    let fields = traj.fields();
    let energies = match form {
        EquationForm::WithFieldEnergy => Some(
            fields
                .par_iter()
                .map(|f| field_energy(f, params.c))
                .collect::<Result<Vec<_>>>()?,
        ),
        EquationForm::Reduced => None,
    };
    let psi_scale = psi.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let psi_scale = if psi_scale > 0.0 { psi_scale } else { 1.0 };

    let source = kg_source(traj, params)?;
    let c2 = params.c * params.c;
    let minus_laplace_plus_one = |b: &VectorField| {
        apply_multiplier(b, |k| C64::new(1.0 + k.iter().map(|v| v * v).sum::<f64>(), 0.0))
    };
    let field_scale = (0..n)
        .into_par_iter()
        .map(|i| {
            let b = &fields[i].a;
            Ok(sobolev_norm(b, 1.5)? + sobolev_norm(b, -0.5)? + sobolev_norm(&source[i], -0.5)?)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let field_scale = if field_scale > 0.0 { field_scale } else { 1.0 };

    (1..n - 1)
        .into_par_iter()
        .map(|i| {
            let mut hpsi = h.apply(psi[i].values(), &fields[i].a)?;
            if let Some(e) = &energies {
                hpsi.iter_mut()
                    .zip(psi[i].values())
                    .for_each(|(o, p)| *o += e[i] * p);
            }
            let coef = I * params.hbar / (2.0 * dt);
            let s_res = psi[i + 1]
                .values()
                .iter()
                .zip(psi[i - 1].values())
                .zip(&hpsi)
                .map(|((a, b), hp)| (coef * (a - b) - hp).norm_sqr())
                .sum::<f64>()
                .sqrt()
                * psi[i].grid().cell_volume().sqrt();

            let accel = fields[i + 1]
                .a
                .sub(&fields[i].a.scaled(2.0))?
                .add(&fields[i - 1].a)?
                .scaled(1.0 / (c2 * dt * dt));
            let kg = accel
                .add(&minus_laplace_plus_one(&fields[i].a)?)?
                .sub(&source[i])?;
            Ok(NodeResidual {
                index: i,
                time: traj.times().node(i),
                schrodinger: s_res / psi_scale,
                kg: sobolev_norm(&kg, -0.5)? / field_scale,
            })
        })
        .collect()
}

/// Per-node diagnostics row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub l2_norm: f64,
    /// `| ||psi(t)|| - ||psi(0)|| |`
    pub l2_drift: f64,
    pub h2_norm: f64,
    pub field_energy: f64,
    pub div_residual_a: f64,
    pub div_residual_adot: f64,
    pub symmetry_residual: Option<f64>,
    pub schrodinger_residual: Option<f64>,
    pub kg_residual: Option<f64>,
}

impl DiagnosticsRecord {
    /// Whether every present entry is finite and non-negative.
    pub fn is_valid(&self) -> bool {
        [
            Some(self.l2_norm),
            Some(self.l2_drift),
            Some(self.h2_norm),
            Some(self.field_energy),
            Some(self.div_residual_a),
            Some(self.div_residual_adot),
            self.symmetry_residual,
            self.schrodinger_residual,
            self.kg_residual,
        ]
        .into_iter()
        .flatten()
        .all(|v| v.is_finite() && v >= 0.0)
    }
}

/// Diagnostics for every node of `traj`. Residual columns are empty at the
/// endpoints (and everywhere for trajectories shorter than 3 nodes);
/// the symmetry column is filled when `parity` is given.
pub fn diagnose(
    traj: &TrajectoryPair,
    params: &PhysicalParams,
    spec: &CoulombSpec,
    parity: Option<Exchange>,
) -> Result<Vec<DiagnosticsRecord>> {
    let residuals = if traj.len() >= 3 {
        residual_check(traj, params, spec, EquationForm::Reduced)?
    } else {
        Vec::new()
    };
    let n0 = traj.psi()[0].norm();
    (0..traj.len())
        .into_par_iter()
        .map(|i| {
            let psi = &traj.psi()[i];
            let f = &traj.fields()[i];
            let l2 = psi.norm();
            let res = residuals.iter().find(|r| r.index == i);
            let symmetry = match parity {
                Some(p) if l2 > 0.0 => Some(symmetry_residual(psi, p)?),
                _ => None,
            };
            Ok(DiagnosticsRecord {
                time: traj.times().node(i),
                l2_norm: l2,
                l2_drift: (l2 - n0).abs(),
                h2_norm: sobolev_norm(psi.field(), 2.0)?,
                field_energy: field_energy(f, params.c)?,
                div_residual_a: divergence_residual(&f.a)?,
                div_residual_adot: divergence_residual(&f.adot)?,
                symmetry_residual: symmetry,
                schrodinger_residual: res.map(|r| r.schrodinger),
                kg_residual: res.map(|r| r.kg),
            })
        })
        .collect()
}

pub const DIAGNOSTICS_SCHEMA: &str = "# maxsch diagnostics schema v1";

pub const DIAGNOSTICS_COLUMNS: [&str; 10] = [
    "time",
    "l2_norm",
    "l2_drift",
    "h2_norm",
    "field_energy",
    "div_residual_a",
    "div_residual_adot",
    "symmetry_residual",
    "schrodinger_residual",
    "kg_residual",
];

/// One CSV row per node after a schema comment line; absent values are
/// empty fields.
pub fn write_diagnostics_csv<W: Write>(records: &[DiagnosticsRecord], mut out: W) -> Result<()> {
    writeln!(out, "{DIAGNOSTICS_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DIAGNOSTICS_COLUMNS)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in records {
        w.write_record([
            format!("{}", r.time),
            format!("{:e}", r.l2_norm),
            format!("{:e}", r.l2_drift),
            format!("{:e}", r.h2_norm),
            format!("{:e}", r.field_energy),
            format!("{:e}", r.div_residual_a),
            format!("{:e}", r.div_residual_adot),
            opt(r.symmetry_residual),
            opt(r.schrodinger_residual),
            opt(r.kg_residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Largest value of a column over the records (absent entries skipped).
pub fn column_max(records: &[DiagnosticsRecord], pick: impl Fn(&DiagnosticsRecord) -> Option<f64>) -> Option<f64> {
    records.iter().filter_map(pick).reduce(f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{exchange_symmetrize, normalize, TimeGrid};
    use crate::spectral::{ScalarField, SpectralGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g3() -> SpectralGrid {
        SpectralGrid::new(8, 8.0, 3).unwrap()
    }

    fn random_pair_state(seed: u64) -> WaveFunction {
        let g = SpectralGrid::new(4, 4.0, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..g.len())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        WaveFunction::from_values(g, v).unwrap()
    }

    #[test]
    fn field_energy_closed_forms() {
        let g = g3();
        assert_eq!(field_energy(&FieldState::zeros(g.clone()).unwrap(), 1.0).unwrap(), 0.0);
        let a = 0.7;
        let c = 2.0;
        let state = FieldState::new(
            VectorField::zeros(g.clone()).unwrap(),
            VectorField::from_fn(g.clone(), |_| [a, 0.0, 0.0]).unwrap(),
        )
        .unwrap();
        let e = field_energy(&state, c).unwrap();
        let expected = g.volume() * a * a / (8.0 * PI * c * c);
        assert!((e - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn single_mode_energy_matches_hand_computation() {
        let g = g3();
        let w = 2.0 * PI / g.box_length();
        let amp = 0.3;
        // A = amp sin(w x) e_y, curl A = amp w cos(w x) e_z
        let a = VectorField::from_fn(g.clone(), |x| [0.0, amp * (w * x[0]).sin(), 0.0]).unwrap();
        let state = FieldState::new(a, VectorField::zeros(g.clone()).unwrap()).unwrap();
        let e = field_energy(&state, 1.0).unwrap();
        let expected = (amp * w).powi(2) * g.volume() / 2.0 / (8.0 * PI);
        assert!((e - expected).abs() < 1e-10 * expected);
    }

    fn trajectory_with_energy(g: &SpectralGrid, amp: f64) -> TrajectoryPair {
        let times = TimeGrid::span(1.0, 5).unwrap();
        let psi = normalize(&WaveFunction::new(ScalarField::from_fn(g.clone(), |x| C64::new(1.0 + 0.1 * x[0].sin(), 0.0))).unwrap()).unwrap();
        let field = FieldState::new(
            VectorField::zeros(g.clone()).unwrap(),
            VectorField::from_fn(g.clone(), |_| [amp, 0.0, 0.0]).unwrap(),
        )
        .unwrap();
        TrajectoryPair::constant(times, &psi, &field).unwrap()
    }

    #[test]
    fn gauge_phase_round_trip_and_closed_form() {
        let g = g3();
        let params = PhysicalParams::identical(1, 1.0, 1.0).unwrap();
        let traj = trajectory_with_energy(&g, 0.2);
        let e0 = field_energy(&traj.fields()[0], 1.0).unwrap();
        let there = gauge_phase_transform(&traj, &params, GaugeDirection::ToMsp).unwrap();
        for (i, (p, q)) in traj.psi().iter().zip(there.psi()).enumerate() {
            let t = traj.times().node(i);
            let expected = p.field().scaled(C64::from_polar(1.0, -e0 * t));
            assert!(q.field().max_abs_diff(&expected).unwrap() < 1e-12);
        }
        let back = gauge_phase_transform(&there, &params, GaugeDirection::ToMspMaerke).unwrap();
        for (p, q) in traj.psi().iter().zip(back.psi()) {
            assert!(p.field().max_abs_diff(q.field()).unwrap() < 1e-12);
        }
        let zero = trajectory_with_energy(&g, 0.0);
        let same = gauge_phase_transform(&zero, &params, GaugeDirection::ToMsp).unwrap();
        assert_eq!(same.psi(), zero.psi());
    }

    #[test]
    fn symmetry_residual_values() {
        let psi = random_pair_state(1);
        let anti = exchange_symmetrize(&psi, Exchange::Antisymmetric).unwrap();
        let sym = exchange_symmetrize(&psi, Exchange::Symmetric).unwrap();
        assert!(symmetry_residual(&anti, Exchange::Antisymmetric).unwrap() <= 1e-12);
        assert!(symmetry_residual(&sym, Exchange::Symmetric).unwrap() <= 1e-12);
        assert!((symmetry_residual(&anti, Exchange::Symmetric).unwrap() - 2.0).abs() < 1e-12);
        let r = symmetry_residual(&psi, Exchange::Symmetric).unwrap();
        assert!((0.0..=2.0).contains(&r));
        let zero = WaveFunction::zeros(psi.grid().clone()).unwrap();
        assert!(symmetry_residual(&zero, Exchange::Symmetric).is_err());
    }

    #[test]
    fn zero_trajectory_has_zero_residuals() {
        let g = g3();
        let params = PhysicalParams::identical(1, 1.0, 1.0).unwrap();
        let traj = TrajectoryPair::constant(
            TimeGrid::span(1.0, 4).unwrap(),
            &WaveFunction::zeros(g.clone()).unwrap(),
            &FieldState::zeros(g).unwrap(),
        )
        .unwrap();
        let res = residual_check(&traj, &params, &CoulombSpec::Off, EquationForm::Reduced).unwrap();
        assert_eq!(res.len(), 3);
        assert!(res.iter().all(|r| r.schrodinger == 0.0 && r.kg == 0.0));
        let short = TrajectoryPair::constant(
            TimeGrid::span(1.0, 1).unwrap(),
            &traj.psi()[0],
            &traj.fields()[0],
        )
        .unwrap();
        assert!(residual_check(&short, &params, &CoulombSpec::Off, EquationForm::Reduced).is_err());
    }

    #[test]
    fn diagnostics_csv_round_trip() {
        let g = g3();
        let params = PhysicalParams::identical(1, 1.0, 0.0).unwrap();
        let traj = trajectory_with_energy(&g, 0.1);
        let records = diagnose(&traj, &params, &CoulombSpec::Off, None).unwrap();
        assert_eq!(records.len(), traj.len());
        assert!(records.iter().all(|r| r.is_valid()));
        assert!(records[0].schrodinger_residual.is_none());
        assert!(records[1].schrodinger_residual.is_some());
        let mut buf = Vec::new();
        write_diagnostics_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(DIAGNOSTICS_SCHEMA));
        let body = lines.collect::<Vec<_>>().join("\n");
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), DIAGNOSTICS_COLUMNS);
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), traj.len());
        let drift: f64 = rows[3][2].parse().unwrap();
        assert_eq!(drift, records[3].l2_drift);
        assert_eq!(column_max(&records, |r| Some(r.l2_norm)), Some(records.iter().map(|r| r.l2_norm).fold(0.0, f64::max)));
    }
}
