//! `maxsch verify`: a fast batch of invariant checks across the modules,
//! reported as a pass/fail table.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use maxsch_core::diagnostics::symmetry_residual;
use maxsch_core::{
    apply_multiplier, curl, divergence_residual, evolve_schrodinger, exchange_symmetrize,
    gauge_phase_transform, gradient, kg_evolve, picard_solve, project, schrodinger_step,
    sobolev_norm, Exchange, GaugeDirection, Hamiltonian, InitialData, PhysicalParams, PicardConfig,
    ScalarField, SpectralGrid, StepperConfig, TimeGrid, VectorField, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::CliError;
use crate::generate::gaussian_product;
use crate::config::Packet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Suite {
    Spectral,
    Helmholtz,
    KleinGordon,
    Schrodinger,
    Coupler,
    Diagnostics,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Spectral,
        Suite::Helmholtz,
        Suite::KleinGordon,
        Suite::Schrodinger,
        Suite::Coupler,
        Suite::Diagnostics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Spectral => "spectral",
            Suite::Helmholtz => "helmholtz",
            Suite::KleinGordon => "klein-gordon",
            Suite::Schrodinger => "schrodinger",
            Suite::Coupler => "coupler",
            Suite::Diagnostics => "diagnostics",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
                format!("unknown suite {s:?}; expected one of {}", names.join(", "))
            })
    }
}

/// Deliberate faults, to show that the checks can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Adds a gradient to the initial field, breaking the Coulomb gauge.
    Divergence,
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "divergence" => Ok(Fault::Divergence),
            _ => Err(format!("unknown fault {s:?}; expected divergence")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    fn push(&mut self, suite: Suite, name: &str, value: f64, threshold: f64) {
        self.checks.push(Check {
            suite,
            name: name.into(),
            value,
            threshold,
            // NaN fails
            passed: value <= threshold,
        });
    }

    fn push_error(&mut self, suite: Suite, name: &str, err: maxsch_core::Error) {
        log::error!("{}/{name}: {err}", suite.name());
        self.push(suite, name, f64::NAN, 0.0);
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:<40} {:>11} {:>11}  result", "suite", "check", "value", "limit")?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<14} {:<40} {:>11.3e} {:>11.1e}  {}",
                c.suite.name(),
                c.name,
                c.value,
                c.threshold,
                if c.passed { "PASS" } else { "FAIL" }
            )?;
        }
        write!(f, "{} checks, {} failed", self.checks.len(), self.failures())
    }
}

/// Runs the requested suites, in the order given.
pub fn verify_suite(suites: &[Suite], fault: Option<Fault>) -> Report {
    let mut report = Report::default();
    for suite in suites {
        let result = match suite {
            Suite::Spectral => spectral(&mut report),
            Suite::Helmholtz => helmholtz(&mut report, fault),
            Suite::KleinGordon => klein_gordon(&mut report),
            Suite::Schrodinger => schrodinger(&mut report),
            Suite::Coupler => coupler(&mut report),
            Suite::Diagnostics => diagnostics(&mut report),
        };
        if let Err(e) = result {
            report.push_error(*suite, "suite setup", e);
        }
    }
    report
}

/// Turns a report into the process result.
pub fn report_status(report: &Report) -> Result<(), CliError> {
    match report.failures() {
        0 => Ok(()),
        n => Err(CliError::VerifyFailed(n)),
    }
}

type Res = maxsch_core::Result<()>;

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x6d61_7873)
}

fn random_field(grid: &SpectralGrid, rng: &mut ChaCha8Rng) -> maxsch_core::Result<VectorField> {
    VectorField::from_fn(grid.clone(), |_| {
        [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
    })
}

fn rel_l2(a: &ScalarField, b: &ScalarField) -> maxsch_core::Result<f64> {
    Ok(a.sub(b)?.l2_norm() / b.l2_norm().max(f64::MIN_POSITIVE))
}

fn spectral(report: &mut Report) -> Res {
    let g = SpectralGrid::new(8, 3.0, 3)?;
    let mut r = rng();
    let f = ScalarField::from_fn(g.clone(), |_| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)));
    let back = apply_multiplier(&f, |_| C64::new(1.0, 0.0))?;
    report.push(Suite::Spectral, "identity multiplier round trip", rel_l2(&back, &f)?, 1e-13);
    let twice = apply_multiplier(&apply_multiplier(&f, bracket)?, bracket)?;
    let once = apply_multiplier(&f, |k| C64::new(1.0 + k.iter().map(|v| v * v).sum::<f64>(), 0.0))?;
    report.push(Suite::Spectral, "<k> twice equals 1+|k|^2 once", rel_l2(&twice, &once)?, 1e-10);
    let parseval = (sobolev_norm(&f, 0.0)? - f.l2_norm()).abs() / f.l2_norm();
    report.push(Suite::Spectral, "Parseval", parseval, 1e-12);
    Ok(())
}

fn bracket(k: &[f64]) -> C64 {
    C64::new((1.0 + k.iter().map(|v| v * v).sum::<f64>()).sqrt(), 0.0)
}

fn helmholtz(report: &mut Report, fault: Option<Fault>) -> Res {
    let g = SpectralGrid::new(8, 4.0, 3)?;
    let mut r = rng();
    let v = random_field(&g, &mut r)?;
    let p = project(&v)?;
    report.push(Suite::Helmholtz, "projection idempotence", project(&p)?.max_abs_diff(&p)? / v.l2_norm(), 1e-10);
    let phi = ScalarField::new(g.clone(), v.component(0).iter().map(|x| C64::new(*x, 0.0)).collect())?;
    let grad = gradient(&phi)?;
    report.push(Suite::Helmholtz, "gradient annihilation", project(&grad)?.l2_norm() / grad.l2_norm(), 1e-10);
    let w = curl(&v)?;
    report.push(Suite::Helmholtz, "transverse invariance", project(&w)?.max_abs_diff(&w)? / w.l2_norm(), 1e-10);

    // the initial field a scenario would use, optionally corrupted
    let k = 2.0 * PI / g.box_length();
    let mut a0 = VectorField::from_fn(g.clone(), |x| [0.1 * (k * x[1]).sin(), 0.0, 0.1 * (k * x[0]).cos()])?;
    if fault == Some(Fault::Divergence) {
        let bump = ScalarField::from_fn(g.clone(), |x| C64::new(0.05 * (k * x[0]).sin(), 0.0));
        a0 = a0.add(&gradient(&bump)?)?;
    }
    report.push(Suite::Helmholtz, "initial field divergence", divergence_residual(&a0)?, 1e-9);
    Ok(())
}

fn klein_gordon(report: &mut Report) -> Res {
    let g = SpectralGrid::new(8, 2.0 * PI, 3)?;
    let (k, c) = (2.0, 1.0);
    let a0 = VectorField::from_fn(g.clone(), |x| [0.0, 0.0, (k * x[1]).sin()])?;
    let a1 = VectorField::zeros(g.clone())?;
    let times = TimeGrid::span(1.0, 8)?;
    let states = kg_evolve(&a0, &a1, None, &times, c)?;
    let w = c * (1.0 + k * k).sqrt();
    let mut err: f64 = 0.0;
    for (i, s) in states.iter().enumerate() {
        err = err.max(s.a.max_abs_diff(&a0.scaled((w * times.node(i)).cos()))?);
    }
    report.push(Suite::KleinGordon, "single mode closed form", err, 1e-10);
    // the conserved energy of the massive equation includes |A|²
    let energy = |s: &maxsch_core::FieldState| -> maxsch_core::Result<f64> {
        Ok(s.a.l2_norm().powi(2) + curl(&s.a)?.l2_norm().powi(2) + (s.adot.l2_norm() / c).powi(2))
    };
    let e0 = energy(&states[0])?;
    let mut drift: f64 = 0.0;
    for s in &states {
        drift = drift.max((energy(s)? - e0).abs() / e0);
    }
    report.push(Suite::KleinGordon, "free energy conservation", drift, 1e-10);
    Ok(())
}

fn schrodinger(report: &mut Report) -> Res {
    let g = SpectralGrid::new(16, 8.0, 3)?;
    let params = PhysicalParams::identical(1, 1.0, 0.0)?;
    let h = Hamiltonian::new(g.clone(), params, Default::default())?;
    let psi = gaussian_product(&g, &[Packet { center: [4.0; 3], width: 1.0, momentum: [1.0, 0.0, 0.0] }])
        .map_err(|e| maxsch_core::Error::InvalidArgument(e.to_string()))?;
    let zero = VectorField::zeros(g.clone())?;
    let dt = 0.1;
    let stepped = schrodinger_step(&h, &psi, &zero, dt, &StepperConfig::default())?;
    let exact = apply_multiplier(psi.field(), |k| C64::from_polar(1.0, -dt * k.iter().map(|v| v * v).sum::<f64>() / 2.0))?;
    report.push(Suite::Schrodinger, "free step vs exact propagator", rel_l2(stepped.field(), &exact)?, 1e-8);

    let charged = PhysicalParams::identical(1, 1.0, 1.0)?;
    let h = Hamiltonian::new(g.clone(), charged, Default::default())?;
    let k = 2.0 * PI / g.box_length();
    let times = TimeGrid::span(0.5, 8)?;
    let potentials: Vec<VectorField> = times
        .nodes()
        .iter()
        .map(|t| VectorField::from_fn(g.clone(), |x| [0.2 * (k * x[1] + t).sin(), 0.0, 0.0]))
        .collect::<maxsch_core::Result<_>>()?;
    let cfg = StepperConfig::default();
    let fwd = evolve_schrodinger(&h, &psi, &potentials, times.step, &cfg)?;
    let rev: Vec<VectorField> = potentials.iter().rev().cloned().collect();
    let back = evolve_schrodinger(&h, fwd.last().expect("nodes"), &rev, -times.step, &cfg)?;
    report.push(Suite::Schrodinger, "forward then backward", rel_l2(back.last().expect("nodes").field(), psi.field())?, 1e-8);
    let drift = fwd.iter().map(|p| (p.norm() - 1.0).abs()).fold(0.0, f64::max);
    report.push(Suite::Schrodinger, "L2 conservation", drift, 1e-8);
    Ok(())
}

fn small_init(g: &SpectralGrid) -> maxsch_core::Result<InitialData> {
    let psi = gaussian_product(g, &[Packet { center: [4.0; 3], width: 1.0, momentum: [1.0, 0.0, 0.0] }])
        .map_err(|e| maxsch_core::Error::InvalidArgument(e.to_string()))?;
    let k = 2.0 * PI / g.box_length();
    let a0 = VectorField::from_fn(g.clone(), |x| [0.1 * (k * x[1]).sin(), 0.0, 0.1 * (k * x[0]).cos()])?;
    InitialData::new(psi, a0, VectorField::zeros(g.clone())?)
}

fn coupler(report: &mut Report) -> Res {
    let g = SpectralGrid::new(8, 8.0, 3)?;
    let init = small_init(&g)?;
    let params = PhysicalParams::identical(1, 1.0, 1.0)?;
    let cfg = PicardConfig { horizon: 0.5, intervals: 8, ..Default::default() };
    match picard_solve(&init, &params, &cfg) {
        Ok((traj, log)) => {
            report.push(Suite::Coupler, "final Picard distance", log.last_distance().unwrap_or(f64::NAN), cfg.tol);
            let worst = log.records.iter().filter_map(|r| r.ratio).fold(0.0, f64::max);
            report.push(Suite::Coupler, "largest contraction ratio", worst, cfg.contraction_guard);
            let drift = traj.psi().iter().map(|p| (p.norm() - 1.0).abs()).fold(0.0, f64::max);
            report.push(Suite::Coupler, "L2 conservation", drift, 1e-8);
            let mut div: f64 = 0.0;
            for f in traj.fields() {
                div = div.max(divergence_residual(&f.a)?).max(divergence_residual(&f.adot)?);
            }
            report.push(Suite::Coupler, "field divergence", div, 1e-9);
        }
        Err(e) => report.push_error(Suite::Coupler, "Picard solve", e),
    }
    Ok(())
}

fn diagnostics(report: &mut Report) -> Res {
    let g = SpectralGrid::new(4, 4.0, 6)?;
    let packets = [
        Packet { center: [1.0, 2.0, 2.0], width: 0.8, momentum: [0.0; 3] },
        Packet { center: [3.0, 2.0, 2.0], width: 0.8, momentum: [0.5, 0.0, 0.0] },
    ];
    let raw = gaussian_product(&g, &packets).map_err(|e| maxsch_core::Error::InvalidArgument(e.to_string()))?;
    for parity in [Exchange::Antisymmetric, Exchange::Symmetric] {
        let psi = exchange_symmetrize(&raw, parity)?;
        let name = format!("{parity:?} symmetry residual").to_lowercase();
        report.push(Suite::Diagnostics, &name, symmetry_residual(&psi, parity)?, 1e-12);
    }

    let g3 = SpectralGrid::new(8, 8.0, 3)?;
    let init = small_init(&g3)?;
    let traj = init.frozen(TimeGrid::span(1.0, 4)?)?;
    let params = PhysicalParams::identical(1, 1.0, 1.0)?;
    let there = gauge_phase_transform(&traj, &params, GaugeDirection::ToMsp)?;
    let back = gauge_phase_transform(&there, &params, GaugeDirection::ToMspMaerke)?;
    let mut err: f64 = 0.0;
    for (a, b) in back.psi().iter().zip(traj.psi()) {
        err = err.max(rel_l2(a.field(), b.field())?);
    }
    report.push(Suite::Diagnostics, "gauge phase round trip", err, 1e-12);
    Ok(())
}
