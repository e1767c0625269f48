//! Massive Klein–Gordon flow `(□ + 1) B = F` through the Fourier multipliers
//! `cos(c<k>t)` and `sin(c<k>t) / (c<k>)`, with the Duhamel integral taken
//! by the trapezoid rule on the stored source samples.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::current::projected_total_current;
use crate::error::{ensure, Error, Result};
use crate::fields::{FieldState, PhysicalParams, TimeGrid, TrajectoryPair};
use crate::spectral::{spacetime_norm, spectral_scale, SpectralGrid, VectorField, C64, ZERO};

/// The propagator pair at speed of light `c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KgPropagator {
    pub c: f64,
}

impl KgPropagator {
    pub fn new(c: f64) -> Result<Self> {
        ensure(c > 0.0 && c.is_finite(), || format!("c must be positive, got {c}"))?;
        Ok(Self { c })
    }

    /// `c <k>`; never below `c`.
    pub fn frequency(&self, k_squared: f64) -> f64 {
        self.c * (1.0 + k_squared).sqrt()
    }

    /// Symbol of `cos(c (1 - Δ)^{1/2} t)`.
    pub fn cos_symbol(&self, t: f64, k_squared: f64) -> f64 {
        (self.frequency(k_squared) * t).cos()
    }

    /// Symbol of `sin(c (1 - Δ)^{1/2} t) / (c (1 - Δ)^{1/2})`.
    pub fn sin_symbol(&self, t: f64, k_squared: f64) -> f64 {
        let w = self.frequency(k_squared);
        (w * t).sin() / w
    }

    fn frequencies(&self, grid: &SpectralGrid) -> Vec<f64> {
        grid.bracket_squared()
            .into_iter()
            .map(|b| self.c * b.sqrt())
            .collect()
    }
}

fn trapezoid_weight(k: usize, last: usize, dt: f64) -> f64 {
    if k == 0 || k == last {
        0.5 * dt
    } else {
        dt
    }
}

fn check_inputs(
    a0: &VectorField,
    a1: &VectorField,
    source: Option<&[VectorField]>,
    times: &TimeGrid,
) -> Result<()> {
    a0.grid().check_same(a1.grid())?;
    a0.check_finite()?;
    a1.check_finite()?;
    if let Some(f) = source {
        if f.len() != times.len() {
            return Err(Error::InvalidArgument(format!(
                "source has {} samples for {} time nodes",
                f.len(),
                times.len()
            )));
        }
        for s in f {
            a0.grid().check_same(s.grid())?;
            s.check_finite()?;
        }
    }
    Ok(())
}

/// Pointwise bound on `(B, ∂_t B)` up to time `t`, for judging roundoff.
fn output_scale(
    s0: &[Vec<C64>; 3],
    s1: &[Vec<C64>; 3],
    sources: &[[Vec<C64>; 3]],
    omega_max: f64,
    c: f64,
    t: f64,
) -> f64 {
    let f = sources.iter().map(|f| spectral_scale(f)).fold(0.0, f64::max);
    let (a0, a1) = (spectral_scale(s0), spectral_scale(s1));
    (a0 + t.abs() * a1 + c * c * t.abs() * f).max(omega_max * a0 + a1 + c * c * t.abs() * f)
}

/// `(B, ∂_t B)` at node `t_index`, summing the Duhamel integral directly.
///
/// `source` holds `F` at every node of `times`; `None` means `F ≡ 0`.
pub fn kg_propagate(
    a0: &VectorField,
    a1: &VectorField,
    source: Option<&[VectorField]>,
    times: &TimeGrid,
    c: f64,
    t_index: usize,
) -> Result<FieldState> {
    check_inputs(a0, a1, source, times)?;
    ensure(t_index < times.len(), || {
        format!("time index {t_index} outside {} nodes", times.len())
    })?;
    let prop = KgPropagator::new(c)?;
    if t_index == 0 {
        return FieldState::new(a0.clone(), a1.clone());
    }
    let grid = a0.grid().clone();
    let k2: Vec<f64> = grid.bracket_squared().into_iter().map(|b| b - 1.0).collect();
    let t = t_index as f64 * times.step;
    let s0 = a0.forward();
    let s1 = a1.forward();
    let sources: Vec<[Vec<C64>; 3]> = match source {
        Some(f) => f[..=t_index].par_iter().map(|v| v.forward()).collect(),
        None => Vec::new(),
    };
    let mut b = [vec![ZERO; grid.len()], vec![ZERO; grid.len()], vec![ZERO; grid.len()]];
    let mut bdot = b.clone();
    for (i, &kk) in k2.iter().enumerate() {
        let w = prop.frequency(kk);
        let cs = prop.cos_symbol(t, kk);
        let sn = prop.sin_symbol(t, kk);
        for comp in 0..3 {
            b[comp][i] = cs * s0[comp][i] + sn * s1[comp][i];
            bdot[comp][i] = -w * w * sn * s0[comp][i] + cs * s1[comp][i];
        }
        for (k, f) in sources.iter().enumerate() {
            let tau = k as f64 * times.step;
            let weight = c * c * trapezoid_weight(k, t_index, times.step);
            let sn = prop.sin_symbol(t - tau, kk);
            let cs = prop.cos_symbol(t - tau, kk);
            for comp in 0..3 {
                b[comp][i] += weight * sn * f[comp][i];
                bdot[comp][i] += weight * cs * f[comp][i];
            }
        }
    }
    let omega_max = prop.frequency(k2.iter().cloned().fold(0.0, f64::max));
    let scale = output_scale(&s0, &s1, &sources, omega_max, c, t);
    FieldState::new(
        VectorField::from_spectrum_relative(grid.clone(), b, scale)?,
        VectorField::from_spectrum_relative(grid, bdot, scale)?,
    )
}

/// `(B, ∂_t B)` at every node of `times`.
///
/// Uses the angle-addition form of `sin(w(t - τ))` so the Duhamel sums
/// accumulate in one sweep; algebraically identical to [`kg_propagate`].
pub fn kg_evolve(
    a0: &VectorField,
    a1: &VectorField,
    source: Option<&[VectorField]>,
    times: &TimeGrid,
    c: f64,
) -> Result<Vec<FieldState>> {
    check_inputs(a0, a1, source, times)?;
    let prop = KgPropagator::new(c)?;
    let grid = a0.grid().clone();
    let n = grid.len();
    let omega = prop.frequencies(&grid);
    let dt = times.step;
    let s0 = a0.forward();
    let s1 = a1.forward();
    let sources: Option<Vec<[Vec<C64>; 3]>> =
        source.map(|f| f.par_iter().map(|v| v.forward()).collect());

    // open prefix sums: sum_{k < i} w_k cos/sin(w τ_k) F_k, with w_0 = dt / 2
    let mut prefix_cos = [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]];
    let mut prefix_sin = prefix_cos.clone();
    let omega_max = omega.iter().cloned().fold(0.0, f64::max);
    let scale = output_scale(
        &s0,
        &s1,
        sources.as_deref().unwrap_or(&[]),
        omega_max,
        c,
        times.duration(),
    );
    let mut states = Vec::with_capacity(times.len());
    states.push(FieldState::new(a0.clone(), a1.clone())?);
    for i in 0..times.len() {
        let t = i as f64 * dt;
        let mut b = [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]];
        let mut bdot = b.clone();
        for m in 0..n {
            let w = omega[m];
            let (sn, cs) = (w * t).sin_cos();
            for comp in 0..3 {
                b[comp][m] = cs * s0[comp][m] + (sn / w) * s1[comp][m];
                bdot[comp][m] = -w * sn * s0[comp][m] + cs * s1[comp][m];
            }
            if let (Some(src), true) = (&sources, i > 0) {
                let half = 0.5 * dt;
                for comp in 0..3 {
                    let f = src[i][comp][m];
                    let sum_cos = prefix_cos[comp][m] + half * cs * f;
                    let sum_sin = prefix_sin[comp][m] + half * sn * f;
                    b[comp][m] += c * c / w * (sn * sum_cos - cs * sum_sin);
                    bdot[comp][m] += c * c * (cs * sum_cos + sn * sum_sin);
                }
            }
            if let Some(src) = &sources {
                let weight = if i == 0 { 0.5 * dt } else { dt };
                for comp in 0..3 {
                    let f = src[i][comp][m];
                    prefix_cos[comp][m] += weight * cs * f;
                    prefix_sin[comp][m] += weight * sn * f;
                }
            }
        }
        if i > 0 {
            states.push(FieldState::new(
                VectorField::from_spectrum_relative(grid.clone(), b, scale)?,
                VectorField::from_spectrum_relative(grid.clone(), bdot, scale)?,
            )?);
        }
    }
    Ok(states)
}

/// `F(t_i) = (4π/c) Σ_j P J_j[psi(t_i), A(t_i)] + A(t_i)` at every node.
pub fn kg_source(traj: &TrajectoryPair, params: &PhysicalParams) -> Result<Vec<VectorField>> {
    traj.psi()
        .par_iter()
        .zip(traj.fields())
        .map(|(psi, field)| {
            if params.is_uncharged() {
                return Ok(field.a.clone());
            }
            let pj = projected_total_current(psi, &field.a, params)?;
            pj.scaled(4.0 * PI / params.c).add(&field.a)
        })
        .collect()
}

/// Exponent pair `(q, r)` with `0 <= 2/q = 1 - 2/r < 1`.
pub fn check_admissible(q: f64, r: f64) -> Result<()> {
    let lhs = if q.is_infinite() { 0.0 } else { 2.0 / q };
    let rhs = 1.0 - 2.0 / r;
    if !(q > 0.0 && r >= 2.0 && r.is_finite() && (0.0..1.0).contains(&lhs) && (lhs - rhs).abs() < 1e-12)
    {
        return Err(Error::InvalidArgument(format!(
            "(q, r) = ({q}, {r}) is not an admissible Strichartz pair"
        )));
    }
    Ok(())
}

/// `max_{k=0,1} ||∂_t^k B||_{L^q_T W^{σ - k - 2/q, r}}`: diagnostic only.
pub fn strichartz_monitor(
    b: &[VectorField],
    bdot: &[VectorField],
    dt: f64,
    q: f64,
    r: f64,
    sigma: f64,
) -> Result<f64> {
    check_admissible(q, r)?;
    ensure(b.len() == bdot.len(), || "B and ∂B sample counts differ".into())?;
    let shift = if q.is_infinite() { 0.0 } else { 2.0 / q };
    let n0 = spacetime_norm(b, dt, q, sigma - shift, r)?;
    let n1 = spacetime_norm(bdot, dt, q, sigma - 1.0 - shift, r)?;
    Ok(n0.max(n1))
}
