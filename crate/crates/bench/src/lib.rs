//! Inputs shared by the benchmarks in `benches/`.

use std::f64::consts::PI;

use maxsch_core::{normalize, InitialData, ScalarField, SpectralGrid, VectorField, WaveFunction, C64};

/// Normalized Gaussian product state, one packet per particle along x.
pub fn packet(grid: &SpectralGrid) -> WaveFunction {
    let n = grid.dimension() / 3;
    let l = grid.box_length();
    let f = ScalarField::from_fn(grid.clone(), |x| {
        let mut out = C64::new(1.0, 0.0);
        for j in 0..n {
            let c = l * (j as f64 + 1.0) / (n as f64 + 1.0);
            let r2: f64 = (0..3).map(|a| (x[3 * j + a] - if a == 0 { c } else { l / 2.0 }).powi(2)).sum();
            out *= C64::from_polar((-r2 / 2.0).exp(), x[3 * j]);
        }
        out
    });
    normalize(&WaveFunction::new(f).expect("finite")).expect("non-zero")
}

/// `amp·(sin(k y), 0, cos(k x))`, divergence free.
pub fn transverse(grid: &SpectralGrid, amp: f64) -> VectorField {
    let k = 2.0 * PI / grid.box_length();
    VectorField::from_fn(grid.clone(), |x| [amp * (k * x[1]).sin(), 0.0, amp * (k * x[0]).cos()]).expect("finite")
}

pub fn initial_data(grid: &SpectralGrid, amp: f64) -> InitialData {
    let g3 = grid.with_dimension(3).expect("3D grid");
    InitialData::new(packet(grid), transverse(&g3, amp), VectorField::zeros(g3).expect("grid")).expect("admissible")
}
