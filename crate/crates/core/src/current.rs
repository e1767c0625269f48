//! Probability current densities `J_j[psi, A]` and their projected sum.

use rayon::prelude::*;

use crate::error::{ensure, Result};
use crate::fields::{marginal_integrate, PhysicalParams, WaveFunction};
use crate::helmholtz::project;
use crate::spectral::{forward_in_place, inverse_in_place, ScalarField, SpectralGrid, VectorField, C64, I};

/// Multiplies `hat` in place by `factor * i k_axis` (derivative wavenumbers).
pub(crate) fn scale_by_derivative(grid: &SpectralGrid, hat: &mut [C64], axis: usize, factor: C64) {
    let m = grid.points_per_axis();
    let stride = m.pow((grid.dimension() - 1 - axis) as u32);
    let k = grid.derivative_wavenumbers();
    hat.par_chunks_mut(stride * m).for_each(|block| {
        for (i, run) in block.chunks_mut(stride).enumerate() {
            let f = factor * I * k[i];
            run.iter_mut().for_each(|h| *h *= f);
        }
    });
}

/// Spectral derivative of `hat` along `axis`, still in spectral space.
pub(crate) fn differentiate_spectrum(grid: &SpectralGrid, hat: &[C64], axis: usize) -> Vec<C64> {
    let mut out = hat.to_vec();
    scale_by_derivative(grid, &mut out, axis, C64::new(1.0, 0.0));
    out
}

fn check_compatible(psi: &WaveFunction, a: &VectorField, params: &PhysicalParams) -> Result<()> {
    let g = psi.grid();
    ensure(psi.n_particles() == params.n_particles(), || {
        format!(
            "wavefunction describes {} particles, parameters {}",
            psi.n_particles(),
            params.n_particles()
        )
    })?;
    g.with_dimension(3)?.check_same(a.grid())
}

/// `J_j = -(Q_j/m_j) Re ∫ conj(psi) (iħ∇_j + (Q_j/c) A(x_j)) psi dx_j'`.
pub fn current_density(
    psi: &WaveFunction,
    a: &VectorField,
    j: usize,
    params: &PhysicalParams,
) -> Result<VectorField> {
    check_compatible(psi, a, params)?;
    ensure(j < params.n_particles(), || {
        format!("particle {j} out of range for N = {}", params.n_particles())
    })?;
    let grid = psi.grid().clone();
    let grid3 = grid.with_dimension(3)?;
    let q = params.charges[j];
    let mass = params.masses[j];
    if q == 0.0 {
        return VectorField::zeros(grid3);
    }
    let values = psi.values();
    let mut hat = values.to_vec();
    forward_in_place(&grid, &mut hat);

    let density: Vec<C64> = values.iter().map(|v| C64::new(v.norm_sqr(), 0.0)).collect();
    let density = marginal_integrate(&ScalarField::new(grid.clone(), density)?, j)?;

    let mut comps: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (c, slot) in comps.iter_mut().enumerate() {
        let mut d = differentiate_spectrum(&grid, &hat, 3 * j + c);
        inverse_in_place(&grid, &mut d);
        let integrand: Vec<C64> = values
            .iter()
            .zip(&d)
            .map(|(p, dp)| p.conj() * I * params.hbar * dp)
            .collect();
        let kinetic = marginal_integrate(&ScalarField::new(grid.clone(), integrand)?, j)?;
        let ac = a.component(c);
        *slot = kinetic
            .values()
            .iter()
            .zip(density.values())
            .zip(ac)
            .map(|((kin, rho), av)| -(q / mass) * (kin.re + (q / params.c) * av * rho.re))
            .collect();
    }
    VectorField::new(grid3, comps)
}

/// `sum_j P J_j[psi, A]`.
pub fn projected_total_current(
    psi: &WaveFunction,
    a: &VectorField,
    params: &PhysicalParams,
) -> Result<VectorField> {
    check_compatible(psi, a, params)?;
    let mut total = VectorField::zeros(a.grid().clone())?;
    for j in 0..params.n_particles() {
        if params.charges[j] == 0.0 {
            continue;
        }
        total = total.add(&current_density(psi, a, j, params)?)?;
    }
    project(&total)
}
