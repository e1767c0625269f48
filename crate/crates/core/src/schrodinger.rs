//! Magnetic many-body Schrödinger operator and its propagator for a given
//! field trajectory, as a time-ordered product of frozen-field exponentials.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::current::{differentiate_spectrum, scale_by_derivative};
use crate::error::{ensure, Error, Result};
use crate::fields::{PhysicalParams, WaveFunction};
use crate::helmholtz::divergence_residual;
use crate::krylov::lanczos_expm;
use crate::spectral::{
    forward_in_place, inverse_in_place, ScalarField, SpectralGrid, VectorField, C64, I, ZERO,
};

/// Shape of a smeared charge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmearingProfile {
    /// Normalized Gaussian `χ_R` with `χ̂_R(k) = exp(-R²|k|²/2)`.
    #[default]
    Gaussian,
}

/// How the pair interaction `Q_j Q_k / |x_j - x_k|` is put on the torus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum CoulombSpec {
    /// No pair interaction.
    Off,
    /// `4π/|k|²` with the zero mode dropped.
    #[default]
    Spectral,
    /// Interaction of two smeared charges: `4π/|k|² |χ̂_R(k)|²`.
    Smeared {
        radius: f64,
        #[serde(default)]
        profile: SmearingProfile,
    },
}

impl CoulombSpec {
    pub fn validate(&self) -> Result<()> {
        if let CoulombSpec::Smeared { radius, .. } = self {
            ensure(*radius > 0.0 && radius.is_finite(), || {
                format!("smearing radius must be positive, got {radius}")
            })?;
        }
        Ok(())
    }
}

/// Periodic pair kernel `v` sampled on the 3D grid.
pub fn pair_kernel(grid3: &SpectralGrid, spec: &CoulombSpec) -> Result<Vec<f64>> {
    ensure(grid3.dimension() == 3, || "pair kernel lives on a 3D grid".into())?;
    spec.validate()?;
    if let CoulombSpec::Off = spec {
        return Ok(vec![0.0; grid3.len()]);
    }
    let mut hat = vec![ZERO; grid3.len()];
    grid3.for_each_mode(|i, k| {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == 0.0 {
            return;
        }
        let smear = match spec {
            CoulombSpec::Smeared {
                radius,
                profile: SmearingProfile::Gaussian,
            } => (-radius * radius * k2).exp(),
            _ => 1.0,
        };
        hat[i] = C64::new(4.0 * PI / k2 * smear, 0.0);
    });
    inverse_in_place(grid3, &mut hat);
    let scale = 1.0 / grid3.cell_volume();
    Ok(hat.iter().map(|v| v.re * scale).collect())
}

/// `V(x) = sum_{j<k} Q_j Q_k v(x_j - x_k)` on the `3N` grid.
pub fn coulomb_pair_potential(
    grid: &SpectralGrid,
    params: &PhysicalParams,
    spec: &CoulombSpec,
) -> Result<Vec<f64>> {
    ensure(grid.dimension() == 3 * params.n_particles(), || {
        format!(
            "grid dimension {} does not match N = {}",
            grid.dimension(),
            params.n_particles()
        )
    })?;
    let np = params.n_particles();
    let mut out = vec![0.0; grid.len()];
    if np < 2 || matches!(spec, CoulombSpec::Off) {
        spec.validate()?;
        return Ok(out);
    }
    let grid3 = grid.with_dimension(3)?;
    let kernel = pair_kernel(&grid3, spec)?;
    let m = grid.points_per_axis();
    let block = m * m * m;
    let stride = |j: usize| block.pow((np - 1 - j) as u32);
    for j in 0..np {
        for k in j + 1..np {
            let qq = params.charges[j] * params.charges[k];
            if qq == 0.0 {
                continue;
            }
            let (sj, sk) = (stride(j), stride(k));
            out.par_iter_mut().enumerate().for_each(|(flat, slot)| {
                let bj = (flat / sj) % block;
                let bk = (flat / sk) % block;
                let mut diff = 0;
                let mut place = 1;
                let (mut x, mut y) = (bj, bk);
                for _ in 0..3 {
                    diff += ((x % m + m - y % m) % m) * place;
                    place *= m;
                    x /= m;
                    y /= m;
                }
                *slot += qq * kernel[diff];
            });
        }
    }
    Ok(out)
}

/// Which spelling of the first-order coupling term to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossTermForm {
    /// `div_j(A(x_j) psi)`
    Divergence,
    /// `A(x_j) · ∇_j psi`
    Advective,
    /// Average of the two; the form used inside the Hamiltonian.
    Symmetric,
}

#[derive(Clone, Debug)]
struct Coupling {
    particle: usize,
    /// `iħ Q_j / (2 m_j c)`
    coef: C64,
    lifted: [Vec<f64>; 3],
}

/// A field lifted onto the `3N` grid: the first-order couplings and the
/// scalar part `V + sum_j Q_j²|A(x_j)|²/(2 m_j c²)`.
#[derive(Clone, Debug)]
pub struct FrozenField {
    scalar: Option<Vec<f64>>,
    couplings: Vec<Coupling>,
}

/// The frozen-field Hamiltonian
/// `H = sum_j (1/2m_j) (iħ∇_j + (Q_j/c) A(x_j))² + V`,
/// with the cross term in the symmetric (Hermitian on the grid) form
/// `iħ(Q_j/c) (div_j(A ·) + A · ∇_j)`.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    grid: SpectralGrid,
    grid3: SpectralGrid,
    params: PhysicalParams,
    coulomb: CoulombSpec,
    kinetic: Vec<f64>,
    potential: Option<Vec<f64>>,
}

impl Hamiltonian {
    pub fn new(grid: SpectralGrid, params: PhysicalParams, coulomb: CoulombSpec) -> Result<Self> {
        params.validate()?;
        let np = params.n_particles();
        let potential = coulomb_pair_potential(&grid, &params, &coulomb)?;
        let potential = potential.iter().any(|v| *v != 0.0).then_some(potential);
        let mut kinetic = Vec::with_capacity(grid.len());
        let h2 = params.hbar * params.hbar;
        grid.for_each_mode(|_, k| {
            let mut e = 0.0;
            for j in 0..np {
                let kj = &k[3 * j..3 * j + 3];
                e += h2 * (kj[0] * kj[0] + kj[1] * kj[1] + kj[2] * kj[2]) / (2.0 * params.masses[j]);
            }
            kinetic.push(e);
        });
        let grid3 = grid.with_dimension(3)?;
        Ok(Self {
            grid,
            grid3,
            params,
            coulomb,
            kinetic,
            potential,
        })
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn coulomb(&self) -> &CoulombSpec {
        &self.coulomb
    }

    /// Kinetic symbol `sum_j ħ²|k_j|²/2m_j` in flat mode order.
    pub fn kinetic_symbol(&self) -> &[f64] {
        &self.kinetic
    }

    pub fn potential(&self) -> Option<&[f64]> {
        self.potential.as_deref()
    }

    fn block_stride(&self, j: usize) -> usize {
        let np = self.params.n_particles();
        self.grid3.len().pow((np - 1 - j) as u32)
    }

    /// `A(x_j)` component `c` lifted to the `3N` grid.
    fn lifted(&self, a: &VectorField, j: usize, c: usize) -> Vec<f64> {
        let stride = self.block_stride(j);
        let block = self.grid3.len();
        let comp = a.component(c);
        let mut out = vec![0.0; self.grid.len()];
        out.par_chunks_mut(stride * block).for_each(|outer| {
            for (b, run) in outer.chunks_mut(stride).enumerate() {
                run.fill(comp[b]);
            }
        });
        out
    }

    fn check(&self, psi: &[C64], a: &VectorField) -> Result<()> {
        ensure(psi.len() == self.grid.len(), || {
            format!("state has {} values for a grid of {}", psi.len(), self.grid.len())
        })?;
        self.grid3.check_same(a.grid())
    }

    /// Lifts a frozen field onto the `3N` grid once, for repeated application.
    pub fn freeze(&self, a: &VectorField) -> Result<FrozenField> {
        self.grid3.check_same(a.grid())?;
        a.check_finite()?;
        let (c, np) = (self.params.c, self.params.n_particles());
        let mut scalar = self
            .potential
            .clone()
            .unwrap_or_else(|| vec![0.0; self.grid.len()]);
        let mut couplings = Vec::new();
        for j in 0..np {
            let q = self.params.charges[j];
            if q == 0.0 || a.is_zero() {
                continue;
            }
            let mass = self.params.masses[j];
            let lifted = [self.lifted(a, j, 0), self.lifted(a, j, 1), self.lifted(a, j, 2)];
            let w = q * q / (2.0 * mass * c * c);
            scalar.par_iter_mut().enumerate().for_each(|(i, s)| {
                *s += w * (lifted[0][i].powi(2) + lifted[1][i].powi(2) + lifted[2][i].powi(2));
            });
            couplings.push(Coupling {
                particle: j,
                coef: I * self.params.hbar * q / (2.0 * mass * c),
                lifted,
            });
        }
        let has_scalar = scalar.iter().any(|v| *v != 0.0);
        Ok(FrozenField {
            scalar: has_scalar.then_some(scalar),
            couplings,
        })
    }

    /// `H[A] psi` on raw grid values.
    pub fn apply(&self, psi: &[C64], a: &VectorField) -> Result<Vec<C64>> {
        self.check(psi, a)?;
        self.apply_frozen(psi, &self.freeze(a)?)
    }

    /// `H[A] psi` with `A` already lifted by [`Self::freeze`].
    pub fn apply_frozen(&self, psi: &[C64], field: &FrozenField) -> Result<Vec<C64>> {
        ensure(psi.len() == self.grid.len(), || {
            format!("state has {} values for a grid of {}", psi.len(), self.grid.len())
        })?;
        let grid = &self.grid;
        let mut hat = psi.to_vec();
        forward_in_place(grid, &mut hat);
        let mut out_hat: Vec<C64> = hat
            .par_iter()
            .zip(&self.kinetic)
            .map(|(h, e)| h * e)
            .collect();
        let mut out_real: Vec<C64> = match &field.scalar {
            Some(v) => psi.par_iter().zip(v).map(|(p, v)| p * v).collect(),
            None => vec![ZERO; psi.len()],
        };
        let mut work = vec![ZERO; psi.len()];
        for coupling in &field.couplings {
            for (comp, ac) in coupling.lifted.iter().enumerate() {
                let axis = 3 * coupling.particle + comp;
                // div_j (A psi)
                work.par_iter_mut()
                    .zip(psi)
                    .zip(ac)
                    .for_each(|((w, p), a)| *w = p * a);
                forward_in_place(grid, &mut work);
                scale_by_derivative(grid, &mut work, axis, coupling.coef);
                out_hat.par_iter_mut().zip(&work).for_each(|(o, d)| *o += d);
                // A · ∇_j psi
                work.copy_from_slice(&hat);
                scale_by_derivative(grid, &mut work, axis, coupling.coef);
                inverse_in_place(grid, &mut work);
                out_real
                    .par_iter_mut()
                    .zip(&work)
                    .zip(ac)
                    .for_each(|((o, g), a)| *o += a * g);
            }
        }
        inverse_in_place(grid, &mut out_hat);
        out_hat.par_iter_mut().zip(&out_real).for_each(|(o, r)| *o += r);
        Ok(out_hat)
    }

    /// First-order coupling term for particle `j` in the requested form.
    pub fn cross_term(
        &self,
        psi: &WaveFunction,
        a: &VectorField,
        j: usize,
        form: CrossTermForm,
    ) -> Result<ScalarField> {
        self.check(psi.values(), a)?;
        ensure(j < self.params.n_particles(), || format!("particle {j} out of range"))?;
        let grid = &self.grid;
        let mut div_hat = vec![ZERO; grid.len()];
        let mut adv = vec![ZERO; grid.len()];
        let hat = psi.field().forward();
        for comp in 0..3 {
            let ac = self.lifted(a, j, comp);
            let mut prod: Vec<C64> = psi.values().iter().zip(&ac).map(|(p, a)| p * a).collect();
            forward_in_place(grid, &mut prod);
            let d = differentiate_spectrum(grid, &prod, 3 * j + comp);
            div_hat.iter_mut().zip(&d).for_each(|(o, d)| *o += d);
            let mut g = differentiate_spectrum(grid, &hat, 3 * j + comp);
            inverse_in_place(grid, &mut g);
            adv.iter_mut().zip(&g).zip(&ac).for_each(|((o, g), a)| *o += a * g);
        }
        inverse_in_place(grid, &mut div_hat);
        let values = match form {
            CrossTermForm::Divergence => div_hat,
            CrossTermForm::Advective => adv,
            CrossTermForm::Symmetric => div_hat
                .iter()
                .zip(&adv)
                .map(|(d, a)| 0.5 * (d + a))
                .collect(),
        };
        ScalarField::new(grid.clone(), values)
    }
}

/// `H[A] psi` for a Coulomb-gauge field.
pub fn hamiltonian_apply(
    psi: &WaveFunction,
    a: &VectorField,
    params: &PhysicalParams,
    spec: &CoulombSpec,
) -> Result<ScalarField> {
    let residual = divergence_residual(a)?;
    ensure(residual <= 1e-8 * a.l2_norm().max(1.0), || {
        format!("vector potential violates the Coulomb gauge (residual {residual:.3e})")
    })?;
    let h = Hamiltonian::new(psi.grid().clone(), params.clone(), *spec)?;
    ScalarField::new(psi.grid().clone(), h.apply(psi.values(), a)?)
}

/// Controls for the Krylov propagator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepperConfig {
    pub krylov_dim: usize,
    /// Frozen-field factors per trajectory interval.
    pub substeps: usize,
    /// Accepted Krylov error estimate relative to `||psi||`.
    pub tolerance: f64,
    /// How many times a rejected step may be halved.
    pub max_subdivisions: u32,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            krylov_dim: 12,
            substeps: 1,
            tolerance: 1e-9,
            max_subdivisions: 10,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.krylov_dim < 2 {
            problems.push(format!("krylov_dim must be at least 2, got {}", self.krylov_dim));
        }
        if self.substeps == 0 {
            problems.push("substeps must be at least 1".to_string());
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            problems.push(format!("tolerance must be nonnegative, got {}", self.tolerance));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }
}

fn l2(values: &[C64]) -> f64 {
    crate::krylov::norm(values)
}

fn expm_step(
    h: &Hamiltonian,
    v: &[C64],
    a: &FrozenField,
    dt: f64,
    cfg: &StepperConfig,
    depth: u32,
) -> Result<Vec<C64>> {
    let tol = cfg.tolerance * l2(v);
    let out = lanczos_expm(|x| h.apply_frozen(x, a), v, dt / h.params.hbar, cfg.krylov_dim, tol)?;
    if out.error_estimate <= tol {
        return Ok(out.vector);
    }
    if depth >= cfg.max_subdivisions {
        return Err(Error::KrylovFailure {
            estimate: out.error_estimate / l2(v).max(f64::MIN_POSITIVE),
            step: dt,
            subdivisions: depth,
        });
    }
    log::debug!(
        "Krylov estimate {:.2e} above tolerance at dt = {dt:.3e}; halving",
        out.error_estimate
    );
    let half = expm_step(h, v, a, 0.5 * dt, cfg, depth + 1)?;
    expm_step(h, &half, a, 0.5 * dt, cfg, depth + 1)
}

/// One frozen-field factor `exp(-(i/ħ) dt H[A])`. Negative `dt` runs backward.
pub fn schrodinger_step(
    h: &Hamiltonian,
    psi: &WaveFunction,
    a: &VectorField,
    dt: f64,
    cfg: &StepperConfig,
) -> Result<WaveFunction> {
    cfg.validate()?;
    h.grid.check_same(psi.grid())?;
    ensure(dt.is_finite(), || format!("step {dt} is not finite"))?;
    let out = expm_step(h, psi.values(), &h.freeze(a)?, dt, cfg, 0)?;
    WaveFunction::from_values(psi.grid().clone(), out)
}

/// Propagates raw values over one interval with the field interpolated
/// linearly between its endpoint samples and frozen at substep midpoints.
fn propagate_interval(
    h: &Hamiltonian,
    v: Vec<C64>,
    a_start: &VectorField,
    a_end: &VectorField,
    dt: f64,
    cfg: &StepperConfig,
) -> Result<Vec<C64>> {
    let n = cfg.substeps;
    let sub = dt / n as f64;
    let same = a_start.components() == a_end.components();
    let frozen_start = if same { Some(h.freeze(a_start)?) } else { None };
    let mut v = v;
    for s in 0..n {
        let theta = (s as f64 + 0.5) / n as f64;
        v = match &frozen_start {
            Some(f) => expm_step(h, &v, f, sub, cfg, 0)?,
            None => {
                let mid = a_start.scaled(1.0 - theta).axpy(theta, a_end)?;
                expm_step(h, &v, &h.freeze(&mid)?, sub, cfg, 0)?
            }
        };
    }
    Ok(v)
}

fn check_trajectory(h: &Hamiltonian, potentials: &[VectorField], dt: f64, cfg: &StepperConfig) -> Result<()> {
    cfg.validate()?;
    ensure(!potentials.is_empty(), || "field trajectory is empty".into())?;
    ensure(dt.is_finite(), || format!("step {dt} is not finite"))?;
    for a in potentials {
        h.grid3.check_same(a.grid())?;
        a.check_finite()?;
    }
    Ok(())
}

/// `psi(t_i) = U_A(t_i, t_0) psi_0` at every node of a uniform grid of step
/// `dt` (signed), one output per field sample.
pub fn evolve_schrodinger(
    h: &Hamiltonian,
    psi0: &WaveFunction,
    potentials: &[VectorField],
    dt: f64,
    cfg: &StepperConfig,
) -> Result<Vec<WaveFunction>> {
    evolve_schrodinger_inhomogeneous(h, psi0, potentials, None, dt, cfg)
}

/// Duhamel solution `xi(t) = U(t, t_0) xi_0 - (i/ħ) ∫ U(t, s) f(s) ds`, the
/// integral by the trapezoid rule on the trajectory nodes.
pub fn evolve_schrodinger_inhomogeneous(
    h: &Hamiltonian,
    psi0: &WaveFunction,
    potentials: &[VectorField],
    source: Option<&[ScalarField]>,
    dt: f64,
    cfg: &StepperConfig,
) -> Result<Vec<WaveFunction>> {
    check_trajectory(h, potentials, dt, cfg)?;
    h.grid.check_same(psi0.grid())?;
    if let Some(f) = source {
        ensure(f.len() == potentials.len(), || {
            format!("source has {} samples for {} nodes", f.len(), potentials.len())
        })?;
        for s in f {
            h.grid.check_same(s.grid())?;
            s.check_finite()?;
        }
    }
    let kick = -I * (0.5 * dt / h.params.hbar);
    let grid = psi0.grid().clone();
    let mut out = Vec::with_capacity(potentials.len());
    out.push(psi0.clone());
    let mut v = psi0.values().to_vec();
    for i in 1..potentials.len() {
        if let Some(f) = source {
            v.par_iter_mut()
                .zip(f[i - 1].values())
                .for_each(|(x, s)| *x += kick * s);
        }
        v = propagate_interval(h, v, &potentials[i - 1], &potentials[i], dt, cfg)
            .map_err(|e| e.context(format!("Schrödinger interval {i}")))?;
        if let Some(f) = source {
            v.par_iter_mut()
                .zip(f[i].values())
                .for_each(|(x, s)| *x += kick * s);
        }
        out.push(WaveFunction::from_values(grid.clone(), v.clone())?);
    }
    Ok(out)
}
