//! Physical state types: parameters, wavefunctions, field states and sampled
//! trajectories, with the elementary manipulations on them.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::spectral::{ScalarField, SpectralGrid, VectorField, C64, ZERO};

/// Default cap on the configuration-space dimension `3N`.
pub const DEFAULT_DIMENSION_CAP: usize = 6;

/// Physical constants and particle data in Gaussian units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub hbar: f64,
    /// Speed of light.
    pub c: f64,
    pub masses: Vec<f64>,
    pub charges: Vec<f64>,
    #[serde(default = "default_cap")]
    pub dimension_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_DIMENSION_CAP
}

impl PhysicalParams {
    pub fn new(hbar: f64, c: f64, masses: Vec<f64>, charges: Vec<f64>) -> Result<Self> {
        let p = Self {
            hbar,
            c,
            masses,
            charges,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        };
        p.validate()?;
        Ok(p)
    }

    /// `n` identical particles of unit mass with charge `charge`, `hbar = c = 1`.
    pub fn identical(n: usize, mass: f64, charge: f64) -> Result<Self> {
        Self::new(1.0, 1.0, vec![mass; n], vec![charge; n])
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            problems.push(format!("hbar must be positive, got {}", self.hbar));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            problems.push(format!("c must be positive, got {}", self.c));
        }
        if self.masses.is_empty() {
            problems.push("at least one particle is required".into());
        }
        if self.masses.len() != self.charges.len() {
            problems.push(format!(
                "{} masses but {} charges",
                self.masses.len(),
                self.charges.len()
            ));
        }
        for (j, m) in self.masses.iter().enumerate() {
            if !(m.is_finite() && *m > 0.0) {
                problems.push(format!("mass {j} must be positive, got {m}"));
            }
        }
        for (j, q) in self.charges.iter().enumerate() {
            if !q.is_finite() {
                problems.push(format!("charge {j} is not finite"));
            }
        }
        if 3 * self.masses.len() > self.dimension_cap {
            problems.push(format!(
                "3N = {} exceeds the dimension cap {}",
                3 * self.masses.len(),
                self.dimension_cap
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    pub fn n_particles(&self) -> usize {
        self.masses.len()
    }

    pub fn is_uncharged(&self) -> bool {
        self.charges.iter().all(|q| *q == 0.0)
    }
}

/// Many-body wavefunction on the `3N`-dimensional torus.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    field: ScalarField,
}

impl WaveFunction {
    pub fn new(field: ScalarField) -> Result<Self> {
        let d = field.grid().dimension();
        if !d.is_multiple_of(3) {
            return Err(Error::InvalidGrid(format!(
                "wavefunction grid dimension {d} is not a multiple of 3"
            )));
        }
        field.check_finite()?;
        Ok(Self { field })
    }

    pub fn zeros(grid: SpectralGrid) -> Result<Self> {
        Self::new(ScalarField::zeros(grid))
    }

    pub fn from_values(grid: SpectralGrid, values: Vec<C64>) -> Result<Self> {
        Self::new(ScalarField::new(grid, values)?)
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.field.grid()
    }

    pub fn n_particles(&self) -> usize {
        self.grid().dimension() / 3
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn into_field(self) -> ScalarField {
        self.field
    }

    pub fn values(&self) -> &[C64] {
        self.field.values()
    }

    pub fn norm(&self) -> f64 {
        self.field.l2_norm()
    }
}

/// Vector potential and its time derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub a: VectorField,
    pub adot: VectorField,
}

impl FieldState {
    pub fn new(a: VectorField, adot: VectorField) -> Result<Self> {
        a.grid().check_same(adot.grid())?;
        a.check_finite()?;
        adot.check_finite()?;
        Ok(Self { a, adot })
    }

    pub fn zeros(grid: SpectralGrid) -> Result<Self> {
        Ok(Self {
            a: VectorField::zeros(grid.clone())?,
            adot: VectorField::zeros(grid)?,
        })
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.a.grid()
    }
}

/// Uniform time nodes `start + i * step`, `i = 0..=intervals`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: f64,
    pub step: f64,
    pub intervals: usize,
}

impl TimeGrid {
    pub fn new(start: f64, step: f64, intervals: usize) -> Result<Self> {
        ensure(step > 0.0 && step.is_finite(), || {
            format!("time step must be positive, got {step}")
        })?;
        ensure(intervals >= 1, || "need at least one time interval".into())?;
        ensure(start.is_finite(), || "start time must be finite".into())?;
        Ok(Self {
            start,
            step,
            intervals,
        })
    }

    /// `[0, horizon]` split into `intervals` equal steps.
    pub fn span(horizon: f64, intervals: usize) -> Result<Self> {
        ensure(intervals >= 1, || "need at least one time interval".into())?;
        Self::new(0.0, horizon / intervals as f64, intervals)
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.node(self.intervals)
    }

    pub fn duration(&self) -> f64 {
        self.intervals as f64 * self.step
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }
}

/// Time-sampled `(psi, A, dA/dt)` on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPair {
    times: TimeGrid,
    psi: Vec<WaveFunction>,
    fields: Vec<FieldState>,
}

impl TrajectoryPair {
    pub fn new(times: TimeGrid, psi: Vec<WaveFunction>, fields: Vec<FieldState>) -> Result<Self> {
        if psi.len() != times.len() || fields.len() != times.len() {
            return Err(Error::InvalidArgument(format!(
                "trajectory has {} time nodes but {} wavefunctions and {} field states",
                times.len(),
                psi.len(),
                fields.len()
            )));
        }
        let pg = psi[0].grid();
        for p in &psi[1..] {
            pg.check_same(p.grid())?;
        }
        let fg = fields[0].grid();
        for f in &fields[1..] {
            fg.check_same(f.grid())?;
        }
        if fg.points_per_axis() != pg.points_per_axis() || fg.box_length() != pg.box_length() {
            return Err(Error::GridMismatch(
                "field grid axes differ from wavefunction grid axes".into(),
            ));
        }
        Ok(Self { times, psi, fields })
    }

    /// Every node holds the same state.
    pub fn constant(times: TimeGrid, psi: &WaveFunction, field: &FieldState) -> Result<Self> {
        Self::new(
            times,
            vec![psi.clone(); times.len()],
            vec![field.clone(); times.len()],
        )
    }

    pub fn times(&self) -> &TimeGrid {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn psi(&self) -> &[WaveFunction] {
        &self.psi
    }

    pub fn fields(&self) -> &[FieldState] {
        &self.fields
    }

    pub fn potentials(&self) -> Vec<VectorField> {
        self.fields.iter().map(|f| f.a.clone()).collect()
    }

    pub fn psi_grid(&self) -> &SpectralGrid {
        self.psi[0].grid()
    }

    pub fn field_grid(&self) -> &SpectralGrid {
        self.fields[0].grid()
    }

    pub fn into_parts(self) -> (TimeGrid, Vec<WaveFunction>, Vec<FieldState>) {
        (self.times, self.psi, self.fields)
    }

    pub fn last_psi(&self) -> &WaveFunction {
        self.psi.last().expect("trajectory is never empty")
    }

    pub fn last_field(&self) -> &FieldState {
        self.fields.last().expect("trajectory is never empty")
    }
}

/// Returns `psi / ||psi||`.
pub fn normalize(psi: &WaveFunction) -> Result<WaveFunction> {
    let n = psi.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroState(
            "cannot normalize a state of zero norm".into(),
        ));
    }
    WaveFunction::new(psi.field().scaled(C64::new(1.0 / n, 0.0)))
}

/// Exchange parity: bosonic `+1` or fermionic `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exchange {
    Symmetric,
    Antisymmetric,
}

impl Exchange {
    pub fn sign(self) -> f64 {
        match self {
            Exchange::Symmetric => 1.0,
            Exchange::Antisymmetric => -1.0,
        }
    }
}

/// `psi ∘ e_{ln}`: swaps the coordinate blocks of particles `l` and `n`.
/// Block permutation is exact on the grid since every axis shares `M` and `L`.
pub fn exchange_particles(field: &ScalarField, l: usize, n: usize) -> Result<ScalarField> {
    let grid = field.grid();
    let np = grid.dimension() / 3;
    ensure(grid.dimension().is_multiple_of(3), || "grid is not a 3N grid".into())?;
    ensure(l < np && n < np, || {
        format!("particle indices {l}, {n} out of range for N = {np}")
    })?;
    if l == n {
        return Ok(field.clone());
    }
    let block = grid.points_per_axis().pow(3);
    let stride = |j: usize| block.pow((np - 1 - j) as u32);
    let (sl, sn) = (stride(l), stride(n));
    let src = field.values();
    let mut out = vec![ZERO; src.len()];
    for (flat, slot) in out.iter_mut().enumerate() {
        let bl = (flat / sl) % block;
        let bn = (flat / sn) % block;
        let swapped = flat - bl * sl - bn * sn + bn * sl + bl * sn;
        *slot = src[swapped];
    }
    ScalarField::new(grid.clone(), out)
}

/// Unnormalized `psi + sign * psi ∘ e_12`.
pub fn exchange_component(psi: &WaveFunction, parity: Exchange) -> Result<ScalarField> {
    ensure(psi.n_particles() == 2, || {
        format!(
            "exchange symmetrization needs N = 2, got N = {}",
            psi.n_particles()
        )
    })?;
    let swapped = exchange_particles(psi.field(), 0, 1)?;
    let s = parity.sign();
    psi.field().zip_with(&swapped, |a, b| a + s * b)
}

/// Projects onto the given exchange parity and renormalizes.
pub fn exchange_symmetrize(psi: &WaveFunction, parity: Exchange) -> Result<WaveFunction> {
    let part = exchange_component(psi, parity)?;
    let n = part.l2_norm();
    if n <= 1e-14 * psi.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::ZeroState(format!(
            "state has no {parity:?} component"
        )));
    }
    WaveFunction::new(part.scaled(C64::new(1.0 / n, 0.0)))
}

/// Integrates out every particle coordinate except block `j`:
/// a plain Riemann sum weighted by `cellvol^{3(N-1)}`.
pub fn marginal_integrate(values: &ScalarField, j: usize) -> Result<ScalarField> {
    let grid = values.grid();
    ensure(grid.dimension().is_multiple_of(3) && grid.dimension() >= 3, || {
        format!("grid dimension {} is not 3N", grid.dimension())
    })?;
    let np = grid.dimension() / 3;
    ensure(j < np, || format!("particle {j} out of range for N = {np}"))?;
    let grid3 = grid.with_dimension(3)?;
    if np == 1 {
        return Ok(values.clone());
    }
    let block = grid.points_per_axis().pow(3);
    let stride = block.pow((np - 1 - j) as u32);
    let weight = grid3.cell_volume().powi((np - 1) as i32);
    let mut out = vec![ZERO; block];
    for (flat, v) in values.values().iter().enumerate() {
        out[(flat / stride) % block] += v;
    }
    out.iter_mut().for_each(|v| *v *= weight);
    ScalarField::new(grid3, out)
}
