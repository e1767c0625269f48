//! Shared scenario builders for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use maxsch_core::{
    exchange_symmetrize, normalize, Exchange, FieldState, InitialData, PhysicalParams, ScalarField,
    SpectralGrid, TimeGrid, TrajectoryPair, VectorField, WaveFunction, C64,
};

/// Normalized Gaussian packet `exp(-|x - c|²/(2 w²) + i p·x)` on a 3D grid.
pub fn gaussian_packet(grid: &SpectralGrid, center: [f64; 3], width: f64, momentum: [f64; 3]) -> WaveFunction {
    let f = ScalarField::from_fn(grid.clone(), |x| {
        let r2: f64 = (0..3).map(|i| (x[i] - center[i]).powi(2)).sum();
        let phase: f64 = (0..3).map(|i| momentum[i] * x[i]).sum();
        C64::from_polar((-r2 / (2.0 * width * width)).exp(), phase)
    });
    normalize(&WaveFunction::new(f).unwrap()).unwrap()
}

/// `amp * [sin(w y), 0, cos(w x)]` with `w = 2π/L`: divergence free.
pub fn transverse_field(grid: &SpectralGrid, amp: f64) -> VectorField {
    let w = 2.0 * PI / grid.box_length();
    VectorField::from_fn(grid.clone(), |x| [amp * (w * x[1]).sin(), 0.0, amp * (w * x[0]).cos()]).unwrap()
}

pub fn zero_field(grid: &SpectralGrid) -> VectorField {
    VectorField::zeros(grid.clone()).unwrap()
}

/// The bundled small-data case: one charged particle, `M = 16`, `L = 16`,
/// a moving packet and a weak transverse field.
pub fn small_data() -> (InitialData, PhysicalParams) {
    let g = SpectralGrid::new(16, 16.0, 3).unwrap();
    let psi = gaussian_packet(&g, [8.0; 3], 1.0, [1.0, 0.0, 0.0]);
    let init = InitialData::new(psi, transverse_field(&g, 0.1), zero_field(&g)).unwrap();
    (init, PhysicalParams::identical(1, 1.0, 1.0).unwrap())
}

/// Two identical charged particles on `M = 8`, `L = 8`, with blobs moving
/// toward each other, projected onto the requested exchange parity.
pub fn two_particles(parity: Exchange) -> (InitialData, PhysicalParams) {
    let g = SpectralGrid::new(8, 8.0, 6).unwrap();
    let g3 = g.with_dimension(3).unwrap();
    let c = 4.0;
    let blob = |x: &[f64], x0: f64, p: f64| {
        let r2 = (x[0] - x0).powi(2) + (x[1] - c).powi(2) + (x[2] - c).powi(2);
        C64::from_polar((-r2 / 1.5).exp(), p * x[0])
    };
    let raw = WaveFunction::new(ScalarField::from_fn(g, |x| {
        blob(&x[..3], c - 1.0, 0.5) * blob(&x[3..], c + 1.0, -0.5)
    }))
    .unwrap();
    let psi = exchange_symmetrize(&raw, parity).unwrap();
    let init = InitialData::new(psi, transverse_field(&g3, 0.1), zero_field(&g3)).unwrap();
    (init, PhysicalParams::identical(2, 1.0, 1.0).unwrap())
}

/// `e^{i k·x} / sqrt(V)` for the integer wave vector `n` (`k = 2π n / L`).
pub fn plane_wave(grid: &SpectralGrid, n: [i32; 3]) -> ScalarField {
    let k = wave_vector(grid, n);
    let norm = grid.volume().sqrt();
    ScalarField::from_fn(grid.clone(), |x| {
        C64::from_polar(1.0 / norm, k[0] * x[0] + k[1] * x[1] + k[2] * x[2])
    })
}

pub fn wave_vector(grid: &SpectralGrid, n: [i32; 3]) -> [f64; 3] {
    let w = 2.0 * PI / grid.box_length();
    [w * n[0] as f64, w * n[1] as f64, w * n[2] as f64]
}

/// Energy of a plane wave in a constant potential `a`:
/// `|-ħk + (Q/c) a|² / 2m`.
pub fn plane_wave_energy(params: &PhysicalParams, k: [f64; 3], a: [f64; 3]) -> f64 {
    let (q, m, c, hbar) = (params.charges[0], params.masses[0], params.c, params.hbar);
    (0..3).map(|i| (-hbar * k[i] + q / c * a[i]).powi(2)).sum::<f64>() / (2.0 * m)
}

pub fn constant_field(grid: &SpectralGrid, a: [f64; 3]) -> VectorField {
    VectorField::from_fn(grid.clone(), |_| a).unwrap()
}

/// Trajectory pair built from closures of time.
pub fn sampled(
    times: TimeGrid,
    psi: impl Fn(f64) -> WaveFunction,
    field: impl Fn(f64) -> FieldState,
) -> TrajectoryPair {
    let nodes = times.nodes();
    TrajectoryPair::new(
        times,
        nodes.iter().map(|t| psi(*t)).collect(),
        nodes.iter().map(|t| field(*t)).collect(),
    )
    .unwrap()
}

pub fn l2_distance(a: &[C64], b: &[C64], grid: &SpectralGrid) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt() * grid.cell_volume().sqrt()
}
