//! Spectral vector calculus on the 3D torus and the Helmholtz projection
//! `P = 1 - grad div Δ^{-1}`.

use crate::error::{Error, Result};
use crate::spectral::{sobolev_norm, spectral_scale, ScalarField, SpectralGrid, VectorField, C64, I, ZERO};

fn check_3d(grid: &SpectralGrid) -> Result<()> {
    if grid.dimension() == 3 {
        Ok(())
    } else {
        Err(Error::InvalidGrid(format!(
            "expected a 3D grid, got dimension {}",
            grid.dimension()
        )))
    }
}

/// Spectral gradient of a real scalar (the imaginary part of `phi` is ignored).
pub fn gradient(phi: &ScalarField) -> Result<VectorField> {
    check_3d(phi.grid())?;
    phi.check_finite()?;
    let grid = phi.grid().clone();
    let mut hat: Vec<C64> = phi.values().iter().map(|v| C64::new(v.re, 0.0)).collect();
    crate::spectral::forward_in_place(&grid, &mut hat);
    let kmax = grid.derivative_wavenumbers().iter().fold(0.0f64, |m, k| m.max(k.abs()));
    let reference = kmax * spectral_scale(std::slice::from_ref(&hat));
    let mut spectra = [
        vec![ZERO; grid.len()],
        vec![ZERO; grid.len()],
        vec![ZERO; grid.len()],
    ];
    grid.for_each_derivative_mode(|i, k| {
        for c in 0..3 {
            spectra[c][i] = I * k[c] * hat[i];
        }
    });
    VectorField::from_spectrum_relative(grid, spectra, reference)
}

/// Spectral divergence, returned as a (real-valued) scalar field.
pub fn divergence(v: &VectorField) -> Result<ScalarField> {
    v.check_finite()?;
    let grid = v.grid().clone();
    let spectra = v.forward();
    let mut hat = vec![ZERO; grid.len()];
    grid.for_each_derivative_mode(|i, k| {
        hat[i] = I * (k[0] * spectra[0][i] + k[1] * spectra[1][i] + k[2] * spectra[2][i]);
    });
    let div = ScalarField::from_spectrum(grid, hat)?;
    let real: Vec<C64> = div.values().iter().map(|v| C64::new(v.re, 0.0)).collect();
    ScalarField::new(div.grid().clone(), real)
}

/// Spectral curl.
pub fn curl(v: &VectorField) -> Result<VectorField> {
    v.check_finite()?;
    let grid = v.grid().clone();
    let s = v.forward();
    let kmax = grid.derivative_wavenumbers().iter().fold(0.0f64, |m, k| m.max(k.abs()));
    let reference = 2.0 * kmax * spectral_scale(&s);
    let mut out = [
        vec![ZERO; grid.len()],
        vec![ZERO; grid.len()],
        vec![ZERO; grid.len()],
    ];
    grid.for_each_derivative_mode(|i, k| {
        out[0][i] = I * (k[1] * s[2][i] - k[2] * s[1][i]);
        out[1][i] = I * (k[2] * s[0][i] - k[0] * s[2][i]);
        out[2][i] = I * (k[0] * s[1][i] - k[1] * s[0][i]);
    });
    VectorField::from_spectrum_relative(grid, out, reference)
}

/// Applies `I - k k^T / |k|^2` mode by mode to spectral components in place.
/// The `k = 0` block is the identity, which keeps the mean of the field.
pub(crate) fn project_spectrum(grid: &SpectralGrid, s: &mut [Vec<C64>; 3]) {
    grid.for_each_derivative_mode(|i, k| {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == 0.0 {
            return;
        }
        let kv = (k[0] * s[0][i] + k[1] * s[1][i] + k[2] * s[2][i]) / k2;
        for c in 0..3 {
            s[c][i] -= k[c] * kv;
        }
    });
}

/// Helmholtz projection onto divergence-free fields.
pub fn project(v: &VectorField) -> Result<VectorField> {
    v.check_finite()?;
    let grid = v.grid().clone();
    let mut s = v.forward();
    let reference = spectral_scale(&s);
    project_spectrum(&grid, &mut s);
    VectorField::from_spectrum_relative(grid, s, reference)
}

/// `||div V||_{H^{-1}}`, a weak-norm measure of the Coulomb gauge violation.
pub fn divergence_residual(v: &VectorField) -> Result<f64> {
    sobolev_norm(&divergence(v)?, -1.0)
}
