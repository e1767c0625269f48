//! Periodic grids, Fourier transforms, multipliers and the norms built on them.
//!
//! Transform convention: the forward transform is the unnormalized DFT sum,
//! the inverse carries `1/M^d`. Norms carry the cell volume `(L/M)^d` so they
//! approximate continuum integrals over the torus `[0, L)^d`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Relative size of the imaginary residue tolerated when a multiplier result
/// is folded back into a real vector field.
pub const REALNESS_TOLERANCE: f64 = 1e-10;

/// Uniform periodic grid on `[0, L)^d` with `M` points per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    points_per_axis: usize,
    box_length: f64,
    dimension: usize,
}

impl SpectralGrid {
    pub fn new(points_per_axis: usize, box_length: f64, dimension: usize) -> Result<Self> {
        if points_per_axis < 4 || !points_per_axis.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 4, got {points_per_axis}"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box length must be positive, got {box_length}"
            )));
        }
        if dimension == 0 {
            return Err(Error::InvalidGrid("dimension must be >= 1".into()));
        }
        points_per_axis
            .checked_pow(dimension as u32)
            .ok_or_else(|| Error::InvalidGrid("grid size overflows usize".into()))?;
        Ok(Self {
            points_per_axis,
            box_length,
            dimension,
        })
    }

    /// Same axes, different number of dimensions.
    pub fn with_dimension(&self, dimension: usize) -> Result<Self> {
        Self::new(self.points_per_axis, self.box_length, dimension)
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Total number of nodes, `M^d`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.points_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dimension as i32)
    }

    pub fn volume(&self) -> f64 {
        self.box_length.powi(self.dimension as i32)
    }

    /// Node coordinates along one axis, `x_i = i L / M`.
    pub fn coordinates(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.points_per_axis).map(|i| i as f64 * h).collect()
    }

    /// Wavenumbers `2 pi m / L` in FFT order, `m = 0, 1, .., M/2-1, -M/2, .., -1`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let m = self.points_per_axis as isize;
        let base = 2.0 * PI / self.box_length;
        (0..m)
            .map(|i| {
                let signed = if i < m / 2 { i } else { i - m };
                base * signed as f64
            })
            .collect()
    }

    /// Wavenumbers for odd-order derivatives: the Nyquist entry is zeroed so
    /// that derivatives of real fields stay real.
    pub fn derivative_wavenumbers(&self) -> Vec<f64> {
        let mut k = self.wavenumbers();
        k[self.points_per_axis / 2] = 0.0;
        k
    }

    /// Writes the per-axis indices of a flat (row-major) index into `out`.
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        let m = self.points_per_axis;
        for slot in out.iter_mut().rev() {
            *slot = flat % m;
            flat /= m;
        }
    }

    pub fn check_same(&self, other: &SpectralGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}^{} on L={} vs {}^{} on L={}",
                self.points_per_axis,
                self.dimension,
                self.box_length,
                other.points_per_axis,
                other.dimension,
                other.box_length
            )))
        }
    }

    /// Calls `f(flat, k)` for every mode in flat (FFT) order, `k` the full
    /// wavevector.
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, &[f64])) {
        let table = self.wavenumbers();
        self.walk_modes(&table, |flat, k| f(flat, k));
    }

    /// Like [`Self::for_each_mode`] with derivative wavenumbers.
    pub fn for_each_derivative_mode(&self, mut f: impl FnMut(usize, &[f64])) {
        let table = self.derivative_wavenumbers();
        self.walk_modes(&table, |flat, k| f(flat, k));
    }

    fn walk_modes(&self, table: &[f64], mut f: impl FnMut(usize, &[f64])) {
        let d = self.dimension;
        let m = self.points_per_axis;
        let mut idx = vec![0usize; d];
        let mut k: Vec<f64> = vec![table[0]; d];
        for flat in 0..self.len() {
            f(flat, &k);
            // odometer increment, last axis fastest
            for axis in (0..d).rev() {
                idx[axis] += 1;
                if idx[axis] < m {
                    k[axis] = table[idx[axis]];
                    break;
                }
                idx[axis] = 0;
                k[axis] = table[0];
            }
        }
    }

    /// Calls `f(flat, x)` for every node, `x` its coordinates.
    pub fn for_each_node(&self, mut f: impl FnMut(usize, &[f64])) {
        let h = self.spacing();
        let mut idx = vec![0usize; self.dimension];
        let mut x = vec![0.0; self.dimension];
        for flat in 0..self.len() {
            self.unravel(flat, &mut idx);
            for (xi, &i) in x.iter_mut().zip(&idx) {
                *xi = i as f64 * h;
            }
            f(flat, &x);
        }
    }

    /// `<k>^2 = 1 + |k|^2` for every mode, in flat order.
    pub fn bracket_squared(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each_mode(|_, k| out.push(1.0 + k.iter().map(|v| v * v).sum::<f64>()));
        out
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(m: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(m)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(m),
                inverse: planner.plan_fft_inverse(m),
            })
        })
        .clone()
}

fn transform_axes(values: &mut [C64], grid: &SpectralGrid, fft: &Arc<dyn Fft<f64>>) {
    let m = grid.points_per_axis;
    let d = grid.dimension;
    debug_assert_eq!(values.len(), grid.len());
    let scratch_len = fft.get_inplace_scratch_len();
    for axis in 0..d {
        let inner = m.pow((d - 1 - axis) as u32);
        if inner == 1 {
            values.par_chunks_mut(m * 256).for_each_init(
                || vec![ZERO; scratch_len],
                |scratch, lines| fft.process_with_scratch(lines, scratch),
            );
            continue;
        }
        let block = m * inner;
        // Gather a batch of columns into contiguous lines, transform, scatter.
        let batch = inner.min(64);
        values.par_chunks_mut(block).for_each_init(
            || (vec![ZERO; m * batch], vec![ZERO; scratch_len]),
            |(lines, scratch), chunk| {
                let mut col = 0;
                while col < inner {
                    let width = batch.min(inner - col);
                    for i in 0..m {
                        let row = &chunk[i * inner + col..i * inner + col + width];
                        for (b, v) in row.iter().enumerate() {
                            lines[b * m + i] = *v;
                        }
                    }
                    fft.process_with_scratch(&mut lines[..width * m], scratch);
                    for i in 0..m {
                        let row = &mut chunk[i * inner + col..i * inner + col + width];
                        for (b, v) in row.iter_mut().enumerate() {
                            *v = lines[b * m + i];
                        }
                    }
                    col += width;
                }
            },
        );
    }
}

/// In-place unnormalized forward transform.
pub fn forward_in_place(grid: &SpectralGrid, values: &mut [C64]) {
    let p = plans(grid.points_per_axis);
    transform_axes(values, grid, &p.forward);
}

/// In-place inverse transform including the `1/M^d` factor.
pub fn inverse_in_place(grid: &SpectralGrid, values: &mut [C64]) {
    let p = plans(grid.points_per_axis);
    transform_axes(values, grid, &p.inverse);
    let scale = 1.0 / grid.len() as f64;
    values.par_iter_mut().for_each(|v| *v *= scale);
}

/// `max_c sum_k |f^_c(k)| / M^d`: a pointwise bound on the inverse transform.
pub(crate) fn spectral_scale(spectra: &[Vec<C64>]) -> f64 {
    spectra
        .iter()
        .map(|hat| hat.iter().map(|v| v.norm()).sum::<f64>() / hat.len().max(1) as f64)
        .fold(0.0, f64::max)
}

pub(crate) fn first_non_finite_complex(values: &[C64]) -> Option<usize> {
    values
        .iter()
        .position(|v| !(v.re.is_finite() && v.im.is_finite()))
}

pub(crate) fn first_non_finite_real(values: &[f64]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}

/// Complex scalar field sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: SpectralGrid,
    values: Vec<C64>,
}

impl ScalarField {
    pub fn new(grid: SpectralGrid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: SpectralGrid) -> Self {
        let values = vec![ZERO; grid.len()];
        Self { grid, values }
    }

    /// Samples `f` at every node; `f` receives the node coordinates.
    pub fn from_fn(grid: SpectralGrid, mut f: impl FnMut(&[f64]) -> C64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        grid.for_each_node(|_, x| values.push(f(x)));
        Self { grid, values }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        first_non_finite_complex(&self.values)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// Forward transform (unnormalized).
    pub fn forward(&self) -> Vec<C64> {
        let mut hat = self.values.clone();
        forward_in_place(&self.grid, &mut hat);
        hat
    }

    /// Builds a field from spectral coefficients.
    pub fn from_spectrum(grid: SpectralGrid, mut hat: Vec<C64>) -> Result<Self> {
        if hat.len() != grid.len() {
            return Err(Error::GridMismatch("spectrum length".into()));
        }
        inverse_in_place(&grid, &mut hat);
        Ok(Self { grid, values: hat })
    }

    /// `<f, g>` with the grid quadrature weight, conjugate-linear in `self`.
    pub fn inner(&self, other: &ScalarField) -> Result<C64> {
        self.grid.check_same(&other.grid)?;
        let sum: C64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(sum * self.grid.cell_volume())
    }

    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (sum * self.grid.cell_volume()).sqrt()
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// `max |self - other|` over nodes.
    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// Real three-component field on a 3D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: SpectralGrid,
    components: [Vec<f64>; 3],
}

impl VectorField {
    pub fn new(grid: SpectralGrid, components: [Vec<f64>; 3]) -> Result<Self> {
        if grid.dimension != 3 {
            return Err(Error::InvalidGrid(format!(
                "vector fields live on 3D grids, got dimension {}",
                grid.dimension
            )));
        }
        if components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::GridMismatch("component length".into()));
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: SpectralGrid) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, [vec![0.0; n], vec![0.0; n], vec![0.0; n]])
    }

    pub fn from_fn(grid: SpectralGrid, mut f: impl FnMut(&[f64]) -> [f64; 3]) -> Result<Self> {
        let n = grid.len();
        let mut comps = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        grid.for_each_node(|_, x| {
            for (c, val) in comps.iter_mut().zip(f(x)) {
                c.push(val);
            }
        });
        Self::new(grid, comps)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>; 3] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn components_mut(&mut self) -> &mut [Vec<f64>; 3] {
        &mut self.components
    }

    pub fn at(&self, flat: usize) -> [f64; 3] {
        [
            self.components[0][flat],
            self.components[1][flat],
            self.components[2][flat],
        ]
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.components
            .iter()
            .enumerate()
            .find_map(|(c, v)| first_non_finite_real(v).map(|i| c * self.grid.len() + i))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.iter().all(|v| *v == 0.0))
    }

    /// Forward transform of each component.
    pub fn forward(&self) -> [Vec<C64>; 3] {
        let grid = &self.grid;
        let lift = |c: &Vec<f64>| {
            let mut hat: Vec<C64> = c.iter().map(|v| C64::new(*v, 0.0)).collect();
            forward_in_place(grid, &mut hat);
            hat
        };
        [
            lift(&self.components[0]),
            lift(&self.components[1]),
            lift(&self.components[2]),
        ]
    }

    /// Inverse-transforms spectral components and folds them back to real
    /// values, rejecting results whose imaginary part is not roundoff.
    pub fn from_spectrum(grid: SpectralGrid, spectra: [Vec<C64>; 3]) -> Result<Self> {
        Self::from_spectrum_relative(grid, spectra, 0.0)
    }

    /// Like [`Self::from_spectrum`], judging roundoff against
    /// `max(reference, spectral_scale(spectra))`. Operators pass the scale of
    /// their input so that nearly cancelling outputs are not rejected.
    pub(crate) fn from_spectrum_relative(
        grid: SpectralGrid,
        spectra: [Vec<C64>; 3],
        reference: f64,
    ) -> Result<Self> {
        for hat in &spectra {
            if hat.len() != grid.len() {
                return Err(Error::GridMismatch("spectrum length".into()));
            }
        }
        let scale = reference.max(spectral_scale(&spectra));
        let mut comps: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut max_im: f64 = 0.0;
        for (slot, mut hat) in comps.iter_mut().zip(spectra) {
            inverse_in_place(&grid, &mut hat);
            for v in &hat {
                max_im = max_im.max(v.im.abs());
            }
            *slot = hat.into_iter().map(|v| v.re).collect();
        }
        if max_im > REALNESS_TOLERANCE * scale {
            return Err(Error::NonReal {
                residue: max_im / scale,
            });
        }
        Self::new(grid, comps)
    }

    pub fn inner(&self, other: &VectorField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let mut sum = 0.0;
        for c in 0..3 {
            sum += self.components[c]
                .iter()
                .zip(&other.components[c])
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        Ok(sum * self.grid.cell_volume())
    }

    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self
            .components
            .iter()
            .flat_map(|c| c.iter())
            .map(|v| v * v)
            .sum();
        (sum * self.grid.cell_volume()).sqrt()
    }

    pub fn map2(&self, other: &VectorField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let comps = std::array::from_fn(|c| {
            self.components[c]
                .iter()
                .zip(&other.components[c])
                .map(|(a, b)| f(*a, *b))
                .collect()
        });
        Ok(Self {
            grid: self.grid.clone(),
            components: comps,
        })
    }

    pub fn add(&self, other: &VectorField) -> Result<Self> {
        self.map2(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &VectorField) -> Result<Self> {
        self.map2(other, |a, b| a - b)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            components: std::array::from_fn(|c| {
                self.components[c].iter().map(|v| v * factor).collect()
            }),
        }
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: f64, other: &VectorField) -> Result<Self> {
        self.map2(other, |a, b| a + factor * b)
    }

    pub fn max_abs_diff(&self, other: &VectorField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let mut m: f64 = 0.0;
        for c in 0..3 {
            for (a, b) in self.components[c].iter().zip(&other.components[c]) {
                m = m.max((a - b).abs());
            }
        }
        Ok(m)
    }
}

/// Operations shared by scalar and vector fields: everything a multiplier or
/// a norm needs.
pub trait GridField: Clone + Sized {
    fn grid(&self) -> &SpectralGrid;
    fn first_non_finite(&self) -> Option<usize>;
    /// Applies the same diagonal spectral multiplier to every component.
    fn map_spectrum(&self, multiplier: &[C64]) -> Result<Self>;
    /// Pointwise Euclidean magnitude.
    fn magnitudes(&self) -> Vec<f64>;
    /// `sum_k w(k) |f^(k)|^2` summed over components.
    fn weighted_spectral_energy(&self, weight: &[f64]) -> f64;
}

impl GridField for ScalarField {
    fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    fn first_non_finite(&self) -> Option<usize> {
        ScalarField::first_non_finite(self)
    }

    fn map_spectrum(&self, multiplier: &[C64]) -> Result<Self> {
        let mut hat = self.forward();
        hat.iter_mut().zip(multiplier).for_each(|(h, m)| *h *= m);
        ScalarField::from_spectrum(self.grid.clone(), hat)
    }

    fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    fn weighted_spectral_energy(&self, weight: &[f64]) -> f64 {
        self.forward()
            .iter()
            .zip(weight)
            .map(|(h, w)| w * h.norm_sqr())
            .sum()
    }
}

impl GridField for VectorField {
    fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    fn first_non_finite(&self) -> Option<usize> {
        VectorField::first_non_finite(self)
    }

    fn map_spectrum(&self, multiplier: &[C64]) -> Result<Self> {
        let mut spectra = self.forward();
        let peak = multiplier.iter().map(|m| m.norm()).fold(0.0, f64::max);
        let reference = peak * spectral_scale(&spectra);
        for hat in spectra.iter_mut() {
            hat.iter_mut().zip(multiplier).for_each(|(h, m)| *h *= m);
        }
        VectorField::from_spectrum_relative(self.grid.clone(), spectra, reference)
    }

    fn magnitudes(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| {
                let [x, y, z] = self.at(i);
                (x * x + y * y + z * z).sqrt()
            })
            .collect()
    }

    fn weighted_spectral_energy(&self, weight: &[f64]) -> f64 {
        self.forward()
            .iter()
            .map(|hat| {
                hat.iter()
                    .zip(weight)
                    .map(|(h, w)| w * h.norm_sqr())
                    .sum::<f64>()
            })
            .sum()
    }
}

fn check_input<F: GridField>(f: &F) -> Result<()> {
    match f.first_non_finite() {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Tabulates a multiplier `m(k)` on the full wavevector grid.
pub fn tabulate(grid: &SpectralGrid, m: impl Fn(&[f64]) -> C64) -> Vec<C64> {
    let mut table = Vec::with_capacity(grid.len());
    grid.for_each_mode(|_, k| table.push(m(k)));
    table
}

/// Returns `F^{-1}[m(k) F f]`.
pub fn apply_multiplier<F: GridField>(f: &F, m: impl Fn(&[f64]) -> C64) -> Result<F> {
    check_input(f)?;
    let table = tabulate(f.grid(), m);
    if let Some(index) = first_non_finite_complex(&table) {
        return Err(Error::InvalidArgument(format!(
            "multiplier is not finite at mode {index}"
        )));
    }
    f.map_spectrum(&table)
}

/// `||<k>^s f^||` normalized so that `s = 0` is the grid L2 norm.
pub fn sobolev_norm<F: GridField>(f: &F, s: f64) -> Result<f64> {
    check_input(f)?;
    let grid = f.grid();
    let weight: Vec<f64> = if s == 0.0 {
        vec![1.0; grid.len()]
    } else {
        grid.bracket_squared().into_iter().map(|b| b.powf(s)).collect()
    };
    let energy = f.weighted_spectral_energy(&weight);
    Ok((energy * grid.cell_volume() / grid.len() as f64).sqrt())
}

/// Grid-quadrature `L^r` norm; `r = f64::INFINITY` gives the max norm.
pub fn lebesgue_norm<F: GridField>(f: &F, r: f64) -> Result<f64> {
    ensure(r >= 1.0, || format!("Lebesgue exponent must be >= 1, got {r}"))?;
    check_input(f)?;
    Ok(lebesgue_of_magnitudes(&f.magnitudes(), r, f.grid().cell_volume()))
}

fn lebesgue_of_magnitudes(mags: &[f64], r: f64, cell_volume: f64) -> f64 {
    let max = mags.iter().cloned().fold(0.0, f64::max);
    if r.is_infinite() || max == 0.0 {
        return max;
    }
    // scale by the max to keep |f|^r in range
    let sum: f64 = mags.iter().map(|v| (v / max).powf(r)).sum();
    max * (sum * cell_volume).powf(1.0 / r)
}

/// `W^{s,r}` norm computed multiplier-first: `|| F^{-1}[<k>^s f^] ||_{L^r}`.
pub fn sobolev_lebesgue_norm<F: GridField>(f: &F, s: f64, r: f64) -> Result<f64> {
    if s == 0.0 {
        return lebesgue_norm(f, r);
    }
    if r == 2.0 {
        return sobolev_norm(f, s);
    }
    let g = apply_multiplier(f, |k| {
        C64::new((1.0 + k.iter().map(|v| v * v).sum::<f64>()).powf(s / 2.0), 0.0)
    })?;
    lebesgue_norm(&g, r)
}

/// Time integral of a sampled non-negative function: trapezoid `L^q` norm
/// (`q = inf` gives the max).
pub fn time_lebesgue_norm(values: &[f64], dt: f64, q: f64) -> Result<f64> {
    ensure(q >= 1.0, || format!("time exponent must be >= 1, got {q}"))?;
    ensure(values.len() >= 2, || "need at least two time samples".into())?;
    if q.is_infinite() {
        return Ok(values.iter().cloned().fold(0.0, f64::max));
    }
    let n = values.len();
    let sum: f64 = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            w * v.powf(q)
        })
        .sum();
    Ok((sum * dt).powf(1.0 / q))
}

/// `L^q_T W^{s,r}` mixed norm of uniformly sampled fields.
pub fn spacetime_norm<F: GridField + Sync>(
    samples: &[F],
    dt: f64,
    q: f64,
    s: f64,
    r: f64,
) -> Result<f64> {
    ensure(samples.len() >= 2, || "need at least two time samples".into())?;
    ensure(dt > 0.0 && dt.is_finite(), || format!("time step must be positive, got {dt}"))?;
    let grid = samples[0].grid();
    for f in &samples[1..] {
        grid.check_same(f.grid())?;
    }
    let per_sample = samples
        .par_iter()
        .map(|f| sobolev_lebesgue_norm(f, s, r))
        .collect::<Result<Vec<_>>>()?;
    time_lebesgue_norm(&per_sample, dt, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scalar(grid: &SpectralGrid, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ScalarField::new(grid.clone(), values).unwrap()
    }

    fn random_real(grid: &SpectralGrid, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), 0.0))
            .collect();
        ScalarField::new(grid.clone(), values).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SpectralGrid::new(6, 1.0, 3).is_err());
        assert!(SpectralGrid::new(2, 1.0, 3).is_err());
        assert!(SpectralGrid::new(8, 0.0, 3).is_err());
        assert!(SpectralGrid::new(8, 1.0, 0).is_err());
    }

    #[test]
    fn wavenumbers_are_fft_ordered() {
        let g = SpectralGrid::new(8, 2.0 * PI, 1).unwrap();
        assert_eq!(
            g.wavenumbers(),
            vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]
        );
        assert_eq!(g.derivative_wavenumbers()[4], 0.0);
    }

    #[test]
    fn round_trip_matrix() {
        for (m, d) in [(4, 1), (8, 2), (16, 3), (4, 6), (32, 3)] {
            let g = SpectralGrid::new(m, 3.0, d).unwrap();
            let f = random_scalar(&g, m as u64 + d as u64);
            let back = ScalarField::from_spectrum(g.clone(), f.forward()).unwrap();
            let err = back.sub(&f).unwrap().l2_norm() / f.l2_norm();
            assert!(err < 1e-12, "M={m} d={d} err={err:e}");
        }
    }

    #[test]
    fn forward_matches_naive_dft_in_two_dimensions() {
        let g = SpectralGrid::new(4, 1.0, 2).unwrap();
        let f = random_scalar(&g, 3);
        let hat = f.forward();
        let m = 4;
        for a in 0..m {
            for b in 0..m {
                let mut s = ZERO;
                for x in 0..m {
                    for y in 0..m {
                        let phase = -2.0 * PI * ((a * x + b * y) as f64) / m as f64;
                        s += f.values()[x * m + y] * C64::from_polar(1.0, phase);
                    }
                }
                assert!((s - hat[a * m + b]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_multiplier_round_trips() {
        let g = SpectralGrid::new(8, 5.0, 3).unwrap();
        let f = random_scalar(&g, 1);
        let out = apply_multiplier(&f, |_| C64::new(1.0, 0.0)).unwrap();
        assert!(out.max_abs_diff(&f).unwrap() < 1e-13);
    }

    #[test]
    fn laplacian_symbol_on_single_mode() {
        let g = SpectralGrid::new(16, 16.0, 3).unwrap();
        let k0 = [2.0 * PI * 2.0 / 16.0, -2.0 * PI / 16.0, 2.0 * PI * 3.0 / 16.0];
        let wave = |x: &[f64]| C64::from_polar(1.0, k0[0] * x[0] + k0[1] * x[1] + k0[2] * x[2]);
        let f = ScalarField::from_fn(g.clone(), wave);
        let out = apply_multiplier(&f, |k| C64::new(k.iter().map(|v| v * v).sum(), 0.0)).unwrap();
        let k2: f64 = k0.iter().map(|v| v * v).sum();
        let expected = f.scaled(C64::new(k2, 0.0));
        assert!(out.max_abs_diff(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn bracket_twice_equals_bracket_squared_once() {
        let g = SpectralGrid::new(8, 7.0, 3).unwrap();
        let f = random_real(&g, 11);
        let bracket = |k: &[f64]| C64::new((1.0 + k.iter().map(|v| v * v).sum::<f64>()).sqrt(), 0.0);
        let twice = apply_multiplier(&apply_multiplier(&f, bracket).unwrap(), bracket).unwrap();
        let once =
            apply_multiplier(&f, |k| C64::new(1.0 + k.iter().map(|v| v * v).sum::<f64>(), 0.0))
                .unwrap();
        let scale = once.l2_norm();
        assert!(twice.sub(&once).unwrap().l2_norm() / scale < 1e-10);
    }

    #[test]
    fn multiplier_rejects_non_finite_input() {
        let g = SpectralGrid::new(4, 1.0, 2).unwrap();
        let mut f = ScalarField::zeros(g);
        f.values_mut()[5] = C64::new(f64::NAN, 0.0);
        match apply_multiplier(&f, |_| C64::new(1.0, 0.0)) {
            Err(Error::NonFinite { index }) => assert_eq!(index, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_field_sobolev_norm_is_volume_scaled() {
        let g = SpectralGrid::new(8, 3.0, 3).unwrap();
        let c0 = C64::new(0.6, -0.8) * 2.5;
        let f = ScalarField::from_fn(g.clone(), |_| c0);
        for s in [-1.0, 0.0, 0.5, 2.0] {
            let n = sobolev_norm(&f, s).unwrap();
            assert!((n - c0.norm() * g.volume().sqrt()).abs() < 1e-12 * n);
        }
    }

    #[test]
    fn single_mode_h2_norm() {
        let g = SpectralGrid::new(8, 4.0, 3).unwrap();
        let k0 = [2.0 * PI / 4.0, 0.0, -2.0 * PI * 2.0 / 4.0];
        let f = ScalarField::from_fn(g.clone(), |x| {
            C64::from_polar(1.0, k0[0] * x[0] + k0[2] * x[2])
        });
        let k2: f64 = k0.iter().map(|v| v * v).sum();
        let n = sobolev_norm(&f, 2.0).unwrap();
        let expected = (1.0 + k2) * g.volume().sqrt();
        assert!((n - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn h1_norm_is_l2_plus_gradient_energy() {
        // Parseval against the component gradients computed mode by mode.
        let g = SpectralGrid::new(8, 5.0, 3).unwrap();
        let f = random_scalar(&g, 21);
        let h1 = sobolev_norm(&f, 1.0).unwrap();
        let l2 = sobolev_norm(&f, 0.0).unwrap();
        let mut grad_sq = 0.0;
        for axis in 0..3 {
            let d = apply_multiplier(&f, |k| I * k[axis]).unwrap();
            grad_sq += d.l2_norm().powi(2);
        }
        let lhs = h1 * h1;
        let rhs = l2 * l2 + grad_sq;
        assert!((lhs - rhs).abs() < 1e-8 * lhs);
    }

    #[test]
    fn parseval_on_random_field() {
        let g = SpectralGrid::new(8, 2.5, 3).unwrap();
        let f = random_scalar(&g, 5);
        let l2 = lebesgue_norm(&f, 2.0).unwrap();
        let spec: f64 = f.forward().iter().map(|v| v.norm_sqr()).sum();
        let parseval = spec * g.cell_volume() / g.len() as f64;
        assert!((l2 * l2 - parseval).abs() < 1e-10 * l2 * l2);
        let s0 = sobolev_norm(&f, 0.0).unwrap();
        assert!((l2 - s0).abs() < 1e-12 * l2);
    }

    #[test]
    fn lebesgue_examples() {
        let g = SpectralGrid::new(8, 2.0, 3).unwrap();
        let ones = ScalarField::from_fn(g.clone(), |_| C64::new(1.0, 0.0));
        let n4 = lebesgue_norm(&ones, 4.0).unwrap();
        assert!((n4 - g.volume().powf(0.25)).abs() < 1e-12);

        let mut spike = ScalarField::zeros(g.clone());
        spike.values_mut()[17] = C64::new(-3.0, 4.0);
        for r in [1.0, 2.0, 3.5] {
            let n = lebesgue_norm(&spike, r).unwrap();
            assert!((n - 5.0 * g.cell_volume().powf(1.0 / r)).abs() < 1e-12);
        }
        assert_eq!(lebesgue_norm(&spike, f64::INFINITY).unwrap(), 5.0);
        assert!(matches!(
            lebesgue_norm(&spike, 0.5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn spacetime_norm_examples() {
        let g = SpectralGrid::new(8, 2.0, 3).unwrap();
        let base = random_real(&g, 9);
        let frozen = vec![base.clone(); 5];
        let n = spacetime_norm(&frozen, 0.1, f64::INFINITY, 0.5, 3.0).unwrap();
        let direct = sobolev_lebesgue_norm(&base, 0.5, 3.0).unwrap();
        assert!((n - direct).abs() < 1e-14 * direct);

        let zero = vec![ScalarField::zeros(g.clone()); 4];
        assert_eq!(spacetime_norm(&zero, 0.1, 4.0, 1.0, 4.0).unwrap(), 0.0);

        // a(t) = t on [0, 1], q = 4: ||g|| (1/5)^(1/4)
        let n_t = 64;
        let dt = 1.0 / (n_t - 1) as f64;
        let ramp: Vec<_> = (0..n_t)
            .map(|i| base.scaled(C64::new(i as f64 * dt, 0.0)))
            .collect();
        let n = spacetime_norm(&ramp, dt, 4.0, 0.0, 2.0).unwrap();
        let exact = base.l2_norm() * 0.2f64.powf(0.25);
        assert!((n - exact).abs() < 0.02 * exact);

        let other = vec![ScalarField::zeros(SpectralGrid::new(4, 2.0, 3).unwrap()), base];
        assert!(matches!(
            spacetime_norm(&other, 0.1, 2.0, 0.0, 2.0),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn vector_multiplier_rejects_non_hermitian_symbol() {
        let g = SpectralGrid::new(8, 2.0, 3).unwrap();
        let v = VectorField::from_fn(g, |x| [x[0].sin(), x[1].cos(), 0.3]).unwrap();
        // i k_x on the full table (including Nyquist) is odd; i * |k| is not Hermitian
        let res = apply_multiplier(&v, |k| I * k.iter().map(|a| a * a).sum::<f64>().sqrt());
        assert!(matches!(res, Err(Error::NonReal { .. })));
    }
}
