//! `maxsch info`: describe a snapshot.

use std::fmt::Write as _;
use std::path::Path;

use maxsch_core::{divergence_residual, field_energy, Snapshot, SnapshotKind};

use crate::error::CliError;

/// Header summary plus a few cheap invariants of the payload.
pub fn describe(path: &Path) -> Result<String, CliError> {
    let snap = Snapshot::read(path)?;
    let h = snap.header.clone();
    let mut out = String::new();
    let g = &h.grid;
    let _ = writeln!(out, "kind        {:?}", h.kind);
    let _ = writeln!(out, "format      {} v{}", h.format, h.version);
    let _ = writeln!(out, "time        {}", h.time);
    let _ = writeln!(
        out,
        "grid        {} points/axis, L = {}, dimension {} ({} points)",
        g.points_per_axis(),
        g.box_length(),
        g.dimension(),
        g.len()
    );
    let _ = writeln!(out, "components  {}", h.components);
    let _ = writeln!(out, "data        {}", h.data);
    match h.kind {
        SnapshotKind::Wavefunction => {
            let psi = snap.into_wavefunction()?;
            let _ = writeln!(out, "particles   {}", psi.n_particles());
            let _ = write!(out, "L2 norm     {:.15e}", psi.norm());
        }
        SnapshotKind::Field => {
            let state = snap.into_field_state()?;
            let c = h.params.as_ref().map_or(1.0, |p| p.c);
            let _ = writeln!(out, "energy      {:.15e} (c = {c})", field_energy(&state, c)?);
            let _ = write!(
                out,
                "div residual A {:.3e}, dA/dt {:.3e}",
                divergence_residual(&state.a)?,
                divergence_residual(&state.adot)?
            );
        }
    }
    Ok(out)
}
