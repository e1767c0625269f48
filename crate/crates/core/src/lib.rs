//! Pseudospectral solver for the many-body Maxwell–Schrödinger system in
//! Coulomb gauge on a periodic box.
//!
//! The solution is built as the fixed point of a map `Φ` that solves a
//! magnetic Schrödinger equation for a given field trajectory and a massive
//! Klein–Gordon equation for a given source, iterated by Picard's method.

pub mod coupler;
pub mod current;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod helmholtz;
pub mod klein_gordon;
pub mod krylov;
pub mod schrodinger;
pub mod snapshot;
pub mod spectral;

pub use coupler::{
    adaptive_horizon, phi_map, picard_solve, picard_solve_from, z_metric, AdaptiveOutcome,
    ConvergenceLog, Coupler, InitialData, IterationRecord, MonitorRecord, PicardConfig, Segment,
    ShrinkEvent, ZMetricReport,
};
pub use current::{current_density, projected_total_current};
pub use diagnostics::{
    diagnose, field_energy, gauge_phase_transform, residual_check, symmetry_residual,
    write_diagnostics_csv, DiagnosticsRecord, EquationForm, GaugeDirection, NodeResidual,
};
pub use error::{Error, Result};
pub use fields::{
    exchange_particles, exchange_symmetrize, marginal_integrate, normalize, Exchange, FieldState,
    PhysicalParams, TimeGrid, TrajectoryPair, WaveFunction,
};
pub use helmholtz::{curl, divergence, divergence_residual, gradient, project};
pub use klein_gordon::{kg_evolve, kg_propagate, kg_source, strichartz_monitor, KgPropagator};
pub use schrodinger::{
    coulomb_pair_potential, evolve_schrodinger, evolve_schrodinger_inhomogeneous,
    hamiltonian_apply, pair_kernel, schrodinger_step, CoulombSpec, CrossTermForm, FrozenField, Hamiltonian,
    SmearingProfile, StepperConfig,
};
pub use snapshot::{Snapshot, SnapshotHeader, SnapshotKind};
pub use spectral::{
    apply_multiplier, lebesgue_norm, sobolev_lebesgue_norm, sobolev_norm, spacetime_norm,
    GridField, ScalarField, SpectralGrid, VectorField, C64,
};
