//! The linearized solution map Φ, the metric on trajectory pairs, the
//! Picard iteration and horizon control.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::fields::{FieldState, PhysicalParams, TimeGrid, TrajectoryPair, WaveFunction};
use crate::helmholtz::divergence_residual;
use crate::klein_gordon::{kg_evolve, kg_source};
use crate::schrodinger::{evolve_schrodinger, CoulombSpec, Hamiltonian, StepperConfig};
use crate::spectral::{sobolev_norm, spacetime_norm, ScalarField, VectorField};

/// Accepted Coulomb-gauge violation of initial data, relative to `max(1, ||A||)`.
pub const INITIAL_DIVERGENCE_TOLERANCE: f64 = 1e-9;

/// `(psi_0, A_0, A_1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    pub psi0: WaveFunction,
    pub a0: VectorField,
    pub a1: VectorField,
}

impl InitialData {
    pub fn new(psi0: WaveFunction, a0: VectorField, a1: VectorField) -> Result<Self> {
        let data = Self { psi0, a0, a1 };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        self.a0.grid().check_same(self.a1.grid())?;
        let g = self.psi0.grid();
        self.a0.grid().check_same(&g.with_dimension(3)?)?;
        for (name, a) in [("A0", &self.a0), ("A1", &self.a1)] {
            a.check_finite()?;
            let r = divergence_residual(a)?;
            ensure(r <= INITIAL_DIVERGENCE_TOLERANCE * a.l2_norm().max(1.0), || {
                format!("{name} is not divergence free (residual {r:.3e})")
            })?;
        }
        Ok(())
    }

    pub fn field_state(&self) -> Result<FieldState> {
        FieldState::new(self.a0.clone(), self.a1.clone())
    }

    /// The time-frozen trajectory used as the default first iterate.
    pub fn frozen(&self, times: TimeGrid) -> Result<TrajectoryPair> {
        TrajectoryPair::constant(times, &self.psi0, &self.field_state()?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardConfig {
    /// Horizon `T` of one Picard solve.
    pub horizon: f64,
    /// Time intervals on `[0, T]`.
    pub intervals: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub contraction_guard: f64,
    pub horizon_shrink: f64,
    /// Adaptive halving gives up below this horizon.
    pub min_horizon: f64,
    pub stepper: StepperConfig,
    pub coulomb: CoulombSpec,
    /// Monitor radius for `max_t ||psi||_{H^2}`; logged, never enforced.
    pub r1: Option<f64>,
    /// Monitor radius for the field norms; logged, never enforced.
    pub r2: Option<f64>,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            intervals: 16,
            tol: 1e-8,
            max_iters: 50,
            contraction_guard: 0.9,
            horizon_shrink: 0.5,
            min_horizon: 1e-3,
            stepper: StepperConfig::default(),
            coulomb: CoulombSpec::default(),
            r1: None,
            r2: None,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            problems.push(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.intervals == 0 {
            problems.push("intervals must be at least 1".to_string());
        }
        if !(self.tol > 0.0) {
            problems.push(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iters == 0 {
            problems.push("max_iters must be at least 1".to_string());
        }
        if !(self.contraction_guard > 0.0 && self.contraction_guard < 1.0) {
            problems.push(format!(
                "contraction_guard must lie in (0, 1), got {}",
                self.contraction_guard
            ));
        }
        if !(self.horizon_shrink > 0.0 && self.horizon_shrink < 1.0) {
            problems.push(format!(
                "horizon_shrink must lie in (0, 1), got {}",
                self.horizon_shrink
            ));
        }
        if !(self.min_horizon > 0.0) {
            problems.push(format!("min_horizon must be positive, got {}", self.min_horizon));
        }
        if let Err(e) = self.stepper.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.coulomb.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::span(self.horizon, self.intervals)
    }
}

/// Components of the trajectory metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ZMetricReport {
    /// `||psi - psi'||_{L^inf_T L^2}`
    pub d_psi: f64,
    /// `||A - A'||_{L^inf_T H^{1/2}}`
    pub d_a_half: f64,
    /// `||A - A'||_{L^4_T L^4}`
    pub d_a_44: f64,
    pub d: f64,
}

pub fn z_metric(x: &TrajectoryPair, y: &TrajectoryPair) -> Result<ZMetricReport> {
    let (tx, ty) = (x.times(), y.times());
    ensure(
        tx.len() == ty.len() && (tx.step - ty.step).abs() <= 1e-12 * tx.step,
        || "trajectories live on different time grids".into(),
    )?;
    x.psi_grid().check_same(y.psi_grid())?;
    x.field_grid().check_same(y.field_grid())?;
    let dpsi: Vec<ScalarField> = x
        .psi()
        .iter()
        .zip(y.psi())
        .map(|(a, b)| a.field().sub(b.field()))
        .collect::<Result<_>>()?;
    let da: Vec<VectorField> = x
        .fields()
        .iter()
        .zip(y.fields())
        .map(|(a, b)| a.a.sub(&b.a))
        .collect::<Result<_>>()?;
    let dt = tx.step;
    let d_psi = spacetime_norm(&dpsi, dt, f64::INFINITY, 0.0, 2.0)?;
    let d_a_half = spacetime_norm(&da, dt, f64::INFINITY, 0.5, 2.0)?;
    let d_a_44 = spacetime_norm(&da, dt, 4.0, 0.0, 4.0)?;
    Ok(ZMetricReport {
        d_psi,
        d_a_half,
        d_a_44,
        d: d_psi.max(d_a_half).max(d_a_44),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub report: ZMetricReport,
    /// `d_k / d_{k-1}`; absent on the first iteration.
    pub ratio: Option<f64>,
    /// Seconds since the solve started.
    pub wall_time: f64,
}

/// Norms defining membership in the iteration space, per iterate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub iteration: usize,
    /// `max_t ||psi||_{H^2}`
    pub psi_h2: f64,
    /// `max_t ||A||_{H^1}`
    pub a_h1: f64,
    /// `||A||_{W^{1,4}_T L^4}` with finite-difference time derivative.
    pub a_w14: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceLog {
    pub records: Vec<IterationRecord>,
    pub monitor: Vec<MonitorRecord>,
}

pub const CONVERGENCE_SCHEMA: &str = "# maxsch convergence schema v1";

impl ConvergenceLog {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last_distance(&self) -> Option<f64> {
        self.records.last().map(|r| r.report.d)
    }

    /// Longest run of consecutive ratios strictly below `bound`.
    pub fn longest_contracting_run(&self, bound: f64) -> usize {
        let mut best = 0;
        let mut run = 0;
        for r in &self.records {
            match r.ratio {
                Some(x) if x < bound => {
                    run += 1;
                    best = best.max(run);
                }
                _ => run = 0,
            }
        }
        best
    }

    /// `iteration,d,d_psi,d_A_half,d_A_44,ratio,wall_time` after a schema line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CONVERGENCE_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "d", "d_psi", "d_A_half", "d_A_44", "ratio", "wall_time"])?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                format!("{:e}", r.report.d),
                format!("{:e}", r.report.d_psi),
                format!("{:e}", r.report.d_a_half),
                format!("{:e}", r.report.d_a_44),
                r.ratio.map(|x| format!("{x:e}")).unwrap_or_default(),
                format!("{:.6}", r.wall_time),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A reusable Φ evaluator: the Hamiltonian is assembled once.
#[derive(Clone, Debug)]
pub struct Coupler {
    hamiltonian: Hamiltonian,
    config: PicardConfig,
}

impl Coupler {
    pub fn new(psi_grid: &crate::spectral::SpectralGrid, params: &PhysicalParams, config: PicardConfig) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        ensure(psi_grid.dimension() == 3 * params.n_particles(), || {
            format!(
                "wavefunction grid dimension {} does not match N = {}",
                psi_grid.dimension(),
                params.n_particles()
            )
        })?;
        let hamiltonian = Hamiltonian::new(psi_grid.clone(), params.clone(), config.coulomb)?;
        Ok(Self { hamiltonian, config })
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn params(&self) -> &PhysicalParams {
        self.hamiltonian.params()
    }

    pub fn config(&self) -> &PicardConfig {
        &self.config
    }

    /// `Φ(psi, A) = (U_A(·,0) psi_0, KG solution with source F[psi, A])`.
    pub fn phi(&self, traj: &TrajectoryPair, init: &InitialData) -> Result<TrajectoryPair> {
        self.hamiltonian.grid().check_same(traj.psi_grid())?;
        init.psi0.grid().check_same(traj.psi_grid())?;
        let times = *traj.times();
        let potentials = traj.potentials();
        let psi = evolve_schrodinger(
            &self.hamiltonian,
            &init.psi0,
            &potentials,
            times.step,
            &self.config.stepper,
        )?;
        let params = self.params();
        let source = kg_source(traj, params)?;
        let fields = kg_evolve(&init.a0, &init.a1, Some(&source), &times, params.c)?;
        TrajectoryPair::new(times, psi, fields)
    }

    fn monitor(&self, iteration: usize, traj: &TrajectoryPair) -> Result<MonitorRecord> {
        let mut psi_h2: f64 = 0.0;
        for p in traj.psi() {
            psi_h2 = psi_h2.max(sobolev_norm(p.field(), 2.0)?);
        }
        let mut a_h1: f64 = 0.0;
        for f in traj.fields() {
            a_h1 = a_h1.max(sobolev_norm(&f.a, 1.0)?);
        }
        let dt = traj.times().step;
        let a = traj.potentials();
        let diffs: Vec<VectorField> = a
            .windows(2)
            .map(|w| Ok(w[1].sub(&w[0])?.scaled(1.0 / dt)))
            .collect::<Result<_>>()?;
        let l4 = spacetime_norm(&a, dt, 4.0, 0.0, 4.0)?;
        let d4 = if diffs.len() >= 2 {
            spacetime_norm(&diffs, dt, 4.0, 0.0, 4.0)?
        } else {
            0.0
        };
        let record = MonitorRecord {
            iteration,
            psi_h2,
            a_h1,
            a_w14: (l4.powi(4) + d4.powi(4)).powf(0.25),
        };
        if let Some(r1) = self.config.r1 {
            if psi_h2 > r1 {
                log::warn!("iteration {iteration}: max H^2 norm {psi_h2:.3e} exceeds R1 = {r1}");
            }
        }
        if let Some(r2) = self.config.r2 {
            if a_h1.max(record.a_w14) > r2 {
                log::warn!(
                    "iteration {iteration}: field norms ({a_h1:.3e}, {:.3e}) exceed R2 = {r2}",
                    record.a_w14
                );
            }
        }
        Ok(record)
    }

    /// Picard iteration from an explicit first iterate.
    pub fn solve_from(
        &self,
        init: &InitialData,
        seed: TrajectoryPair,
    ) -> Result<(TrajectoryPair, ConvergenceLog)> {
        init.validate()?;
        let start = Instant::now();
        let mut log = ConvergenceLog::default();
        let mut current = seed;
        let mut previous: Option<f64> = None;
        let mut above_guard = 0;
        let horizon = current.times().duration();
        for iteration in 1..=self.config.max_iters {
            let next = match self.phi(&current, init) {
                Ok(next) => next,
                // the first iterate is the data itself; a later one this stiff has run away
                Err(e) if iteration > 1 && matches!(e.root(), Error::KrylovFailure { .. }) => {
                    log::warn!("picard {iteration}: iterate left the resolvable range ({e})");
                    return Err(Error::HorizonTooLarge { horizon, log });
                }
                Err(e) => return Err(e.context(format!("Picard iteration {iteration}"))),
            };
            let report = z_metric(&next, &current)?;
            let ratio = previous.map(|p| if p > 0.0 { report.d / p } else { f64::INFINITY });
            log.records.push(IterationRecord {
                iteration,
                report,
                ratio,
                wall_time: start.elapsed().as_secs_f64(),
            });
            log.monitor.push(self.monitor(iteration, &next)?);
            log::info!(
                "picard {iteration}: d = {:.3e} (psi {:.3e}, A {:.3e}/{:.3e}) ratio {}",
                report.d,
                report.d_psi,
                report.d_a_half,
                report.d_a_44,
                ratio.map(|r| format!("{r:.3}")).unwrap_or_else(|| "-".into())
            );
            if report.d <= self.config.tol {
                return Ok((next, log));
            }
            if !report.d.is_finite() {
                return Err(Error::HorizonTooLarge { horizon, log });
            }
            match ratio {
                Some(r) if r > self.config.contraction_guard => above_guard += 1,
                _ => above_guard = 0,
            }
            if above_guard >= 3 {
                return Err(Error::HorizonTooLarge { horizon, log });
            }
            previous = Some(report.d);
            current = next;
        }
        Err(Error::IterationLimit {
            iterations: self.config.max_iters,
            last_distance: log.last_distance().unwrap_or(f64::NAN),
            log,
        })
    }

    /// Picard iteration from the time-frozen initial data on `times`.
    pub fn solve_on(&self, init: &InitialData, times: TimeGrid) -> Result<(TrajectoryPair, ConvergenceLog)> {
        init.validate()?;
        self.solve_from(init, init.frozen(times)?)
    }

    pub fn solve(&self, init: &InitialData) -> Result<(TrajectoryPair, ConvergenceLog)> {
        self.solve_on(init, self.config.time_grid()?)
    }
}

pub fn phi_map(
    traj: &TrajectoryPair,
    init: &InitialData,
    params: &PhysicalParams,
    config: &PicardConfig,
) -> Result<TrajectoryPair> {
    Coupler::new(traj.psi_grid(), params, *config)?.phi(traj, init)
}

pub fn picard_solve(
    init: &InitialData,
    params: &PhysicalParams,
    config: &PicardConfig,
) -> Result<(TrajectoryPair, ConvergenceLog)> {
    Coupler::new(init.psi0.grid(), params, *config)?.solve(init)
}

pub fn picard_solve_from(
    init: &InitialData,
    seed: TrajectoryPair,
    params: &PhysicalParams,
    config: &PicardConfig,
) -> Result<(TrajectoryPair, ConvergenceLog)> {
    Coupler::new(init.psi0.grid(), params, *config)?.solve_from(init, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrinkEvent {
    /// Start time of the segment being attempted.
    pub at: f64,
    pub from: f64,
    pub to: f64,
}

/// One solved segment of an adaptive run.
#[derive(Clone, Debug)]
pub struct Segment {
    pub trajectory: TrajectoryPair,
    pub log: ConvergenceLog,
}

#[derive(Clone, Debug)]
pub struct AdaptiveOutcome {
    /// Segment horizon in use when the run finished.
    pub horizon: f64,
    pub segments: Vec<Segment>,
    pub shrink_events: Vec<ShrinkEvent>,
}

impl AdaptiveOutcome {
    pub fn end_time(&self) -> f64 {
        self.segments
            .last()
            .map(|s| s.trajectory.times().end())
            .unwrap_or(0.0)
    }

    /// Joins the segments into one trajectory, dropping duplicate junction
    /// nodes. All segments must share the time step.
    pub fn stitched(&self) -> Result<TrajectoryPair> {
        ensure(!self.segments.is_empty(), || "no segments to stitch".into())?;
        let first = self.segments[0].trajectory.times();
        let step = first.step;
        let mut psi = Vec::new();
        let mut fields = Vec::new();
        let mut intervals = 0;
        for (i, seg) in self.segments.iter().enumerate() {
            let t = seg.trajectory.times();
            ensure((t.step - step).abs() <= 1e-12 * step, || {
                format!("segment {i} has step {} instead of {step}", t.step)
            })?;
            let skip = usize::from(i > 0);
            psi.extend(seg.trajectory.psi()[skip..].iter().cloned());
            fields.extend(seg.trajectory.fields()[skip..].iter().cloned());
            intervals += t.intervals;
        }
        TrajectoryPair::new(TimeGrid::new(first.start, step, intervals)?, psi, fields)
    }
}

/// Solves up to `total` time, halving the segment horizon whenever the
/// Picard map fails to contract, and continuing from each segment's end
/// state until `total` is covered.
pub fn adaptive_horizon(
    init: &InitialData,
    params: &PhysicalParams,
    config: &PicardConfig,
    total: f64,
) -> Result<AdaptiveOutcome> {
    ensure(total > 0.0 && total.is_finite(), || format!("total time must be positive, got {total}"))?;
    let coupler = Coupler::new(init.psi0.grid(), params, *config)?;
    init.validate()?;
    let dt = config.horizon / config.intervals as f64;
    let mut horizon = config.horizon.min(total);
    let mut start = 0.0;
    let mut data = init.clone();
    let mut segments: Vec<Segment> = Vec::new();
    let mut shrink_events = Vec::new();
    while total - start > 1e-9 * total {
        let length = horizon.min(total - start);
        let intervals = ((length / dt).round() as usize).max(1);
        let times = TimeGrid::new(start, length / intervals as f64, intervals)?;
        match coupler.solve_on(&data, times) {
            Ok((trajectory, log)) => {
                log::info!(
                    "segment [{start:.4}, {:.4}] converged in {} iterations",
                    times.end(),
                    log.iterations()
                );
                data = InitialData {
                    psi0: trajectory.last_psi().clone(),
                    a0: trajectory.last_field().a.clone(),
                    a1: trajectory.last_field().adot.clone(),
                };
                start = times.end();
                segments.push(Segment { trajectory, log });
            }
            Err(Error::HorizonTooLarge { .. }) => {
                let next = horizon * config.horizon_shrink;
                log::warn!("no contraction on horizon {horizon}; shrinking to {next}");
                shrink_events.push(ShrinkEvent {
                    at: start,
                    from: horizon,
                    to: next,
                });
                if next < config.min_horizon {
                    return Err(Error::HorizonFloor {
                        floor: config.min_horizon,
                        tried: next,
                    });
                }
                horizon = next;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(AdaptiveOutcome {
        horizon,
        segments,
        shrink_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::normalize;
    use crate::spectral::{SpectralGrid, C64};

    fn small_grid() -> SpectralGrid {
        SpectralGrid::new(8, 8.0, 3).unwrap()
    }

    fn packet(g: &SpectralGrid) -> WaveFunction {
        let c = g.box_length() / 2.0;
        let f = ScalarField::from_fn(g.clone(), |x| {
            let r2: f64 = x.iter().map(|v| (v - c).powi(2)).sum();
            C64::from_polar((-r2 / 2.0).exp(), 0.7 * x[0])
        });
        normalize(&WaveFunction::new(f).unwrap()).unwrap()
    }

    #[test]
    fn metric_of_a_trajectory_with_itself_is_zero() {
        let g = small_grid();
        let init = InitialData::new(packet(&g), VectorField::zeros(g.clone()).unwrap(), VectorField::zeros(g.clone()).unwrap()).unwrap();
        let traj = init.frozen(TimeGrid::span(1.0, 4).unwrap()).unwrap();
        let r = z_metric(&traj, &traj).unwrap();
        assert_eq!(r, ZMetricReport::default());
        let doubled: Vec<WaveFunction> = traj
            .psi()
            .iter()
            .map(|p| WaveFunction::new(p.field().scaled(C64::new(2.0, 0.0))).unwrap())
            .collect();
        let other = TrajectoryPair::new(*traj.times(), doubled, traj.fields().to_vec()).unwrap();
        let r = z_metric(&traj, &other).unwrap();
        assert!((r.d_psi - 1.0).abs() < 1e-12);
        assert_eq!(r.d_a_half, 0.0);
        assert_eq!(r.d_a_44, 0.0);
        assert_eq!(r.d, r.d_psi);
    }

    #[test]
    fn zero_data_is_a_fixed_point_after_one_iteration() {
        let g = small_grid();
        let params = PhysicalParams::identical(1, 1.0, 1.0).unwrap();
        let init = InitialData::new(
            WaveFunction::zeros(g.clone()).unwrap(),
            VectorField::zeros(g.clone()).unwrap(),
            VectorField::zeros(g.clone()).unwrap(),
        )
        .unwrap();
        let cfg = PicardConfig { horizon: 0.5, intervals: 4, ..Default::default() };
        let (traj, log) = picard_solve(&init, &params, &cfg).unwrap();
        assert_eq!(log.iterations(), 1);
        assert!(traj.psi().iter().all(|p| p.norm() == 0.0));
        assert!(traj.fields().iter().all(|f| f.a.is_zero() && f.adot.is_zero()));
    }

    #[test]
    fn rejects_longitudinal_initial_fields() {
        let g = small_grid();
        let w = 2.0 * std::f64::consts::PI / g.box_length();
        let a0 = VectorField::from_fn(g.clone(), |x| [(w * x[0]).sin(), 0.0, 0.0]).unwrap();
        let err = InitialData::new(packet(&g), a0, VectorField::zeros(g).unwrap()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn config_validation_aggregates_problems() {
        let cfg = PicardConfig { tol: 0.0, horizon_shrink: 1.5, intervals: 0, ..Default::default() };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("tol") && msg.contains("horizon_shrink") && msg.contains("intervals"));
    }

    #[test]
    fn convergence_csv_has_schema_and_columns() {
        let log = ConvergenceLog {
            records: vec![
                IterationRecord { iteration: 1, report: ZMetricReport { d: 1.0, d_psi: 1.0, d_a_half: 0.5, d_a_44: 0.1 }, ratio: None, wall_time: 0.5 },
                IterationRecord { iteration: 2, report: ZMetricReport { d: 0.1, d_psi: 0.1, d_a_half: 0.05, d_a_44: 0.01 }, ratio: Some(0.1), wall_time: 1.0 },
            ],
            monitor: Vec::new(),
        };
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CONVERGENCE_SCHEMA);
        assert_eq!(lines[1], "iteration,d,d_psi,d_A_half,d_A_44,ratio,wall_time");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].contains(",,"));
        assert_eq!(log.longest_contracting_run(0.9), 1);
    }
}
