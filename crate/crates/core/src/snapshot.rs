//! State snapshots: a JSON header plus a flat little-endian binary of
//! complex doubles in row-major (last axis fastest) order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldState, PhysicalParams, WaveFunction};
use crate::spectral::{SpectralGrid, VectorField, C64};

pub const SNAPSHOT_FORMAT: &str = "maxsch-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotKind {
    /// One complex component on the `3N` grid.
    Wavefunction,
    /// Six components on the 3D grid: `A_x, A_y, A_z, ∂A_x, ∂A_y, ∂A_z`
    /// (imaginary parts zero).
    Field,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub kind: SnapshotKind,
    pub time: f64,
    pub grid: SpectralGrid,
    pub components: usize,
    /// Complex values in the data file.
    pub values: usize,
    #[serde(default)]
    pub params: Option<PhysicalParams>,
    /// Data file name, relative to the header.
    pub data: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub data: Vec<C64>,
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

fn encode(values: &[C64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 16);
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8]) -> Result<Vec<C64>> {
    if !bytes.len().is_multiple_of(16) {
        return Err(Error::Snapshot(format!(
            "data length {} is not a multiple of 16 bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect())
}

fn data_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("bin")
}

impl Snapshot {
    pub fn of_wavefunction(psi: &WaveFunction, time: f64, params: Option<&PhysicalParams>) -> Self {
        Self {
            header: SnapshotHeader {
                format: SNAPSHOT_FORMAT.into(),
                version: SNAPSHOT_VERSION,
                kind: SnapshotKind::Wavefunction,
                time,
                grid: psi.grid().clone(),
                components: 1,
                values: psi.values().len(),
                params: params.cloned(),
                data: String::new(),
            },
            data: psi.values().to_vec(),
        }
    }

    pub fn of_field(state: &FieldState, time: f64) -> Self {
        let mut data = Vec::with_capacity(6 * state.grid().len());
        for v in [&state.a, &state.adot] {
            for c in v.components() {
                data.extend(c.iter().map(|x| C64::new(*x, 0.0)));
            }
        }
        Self {
            header: SnapshotHeader {
                format: SNAPSHOT_FORMAT.into(),
                version: SNAPSHOT_VERSION,
                kind: SnapshotKind::Field,
                time,
                grid: state.grid().clone(),
                components: 6,
                values: data.len(),
                params: None,
                data: String::new(),
            },
            data,
        }
    }

    /// Writes `<path>` (JSON header) and `<path>.bin` next to it, each atomically.
    pub fn write(&self, header_path: &Path) -> Result<()> {
        let bin = data_path(header_path);
        let mut header = self.header.clone();
        header.data = bin
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        write_atomic(&bin, &encode(&self.data))?;
        write_atomic(header_path, serde_json::to_string_pretty(&header)?.as_bytes())
    }

    pub fn read_header(header_path: &Path) -> Result<SnapshotHeader> {
        let header: SnapshotHeader = serde_json::from_slice(&fs::read(header_path)?)?;
        if header.format != SNAPSHOT_FORMAT || header.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot {} v{}",
                header.format, header.version
            )));
        }
        let expected = header.grid.len() * header.components;
        if header.values != expected {
            return Err(Error::Snapshot(format!(
                "header declares {} values, grid and components imply {expected}",
                header.values
            )));
        }
        Ok(header)
    }

    pub fn read(header_path: &Path) -> Result<Self> {
        let header = Self::read_header(header_path)?;
        let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
        let data = decode(&fs::read(dir.join(&header.data))?)?;
        if data.len() != header.values {
            return Err(Error::Snapshot(format!(
                "data holds {} values, header declares {}",
                data.len(),
                header.values
            )));
        }
        Ok(Self { header, data })
    }

    pub fn into_wavefunction(self) -> Result<WaveFunction> {
        if self.header.kind != SnapshotKind::Wavefunction {
            return Err(Error::Snapshot("snapshot does not hold a wavefunction".into()));
        }
        WaveFunction::from_values(self.header.grid, self.data)
    }

    pub fn into_field_state(self) -> Result<FieldState> {
        if self.header.kind != SnapshotKind::Field {
            return Err(Error::Snapshot("snapshot does not hold a field state".into()));
        }
        let n = self.header.grid.len();
        let comp = |i: usize| -> Vec<f64> { self.data[i * n..(i + 1) * n].iter().map(|v| v.re).collect() };
        let a = VectorField::new(self.header.grid.clone(), [comp(0), comp(1), comp(2)])?;
        let adot = VectorField::new(self.header.grid.clone(), [comp(3), comp(4), comp(5)])?;
        FieldState::new(a, adot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::ScalarField;

    #[test]
    fn wavefunction_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = SpectralGrid::new(4, 3.0, 3).unwrap();
        let psi = WaveFunction::new(ScalarField::from_fn(g, |x| C64::new(x[0].sin() / 3.0, x[1].exp()))).unwrap();
        let params = PhysicalParams::identical(1, 1.0, -1.0).unwrap();
        let path = dir.path().join("psi.json");
        Snapshot::of_wavefunction(&psi, 0.25, Some(&params)).write(&path).unwrap();
        let back = Snapshot::read(&path).unwrap();
        assert_eq!(back.header.time, 0.25);
        assert_eq!(back.header.params.as_ref(), Some(&params));
        let out = back.into_wavefunction().unwrap();
        for (a, b) in out.values().iter().zip(psi.values()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn field_round_trip_and_kind_check() {
        let dir = tempfile::tempdir().unwrap();
        let g = SpectralGrid::new(4, 3.0, 3).unwrap();
        let a = VectorField::from_fn(g.clone(), |x| [x[0], -x[1], 1.0 / 7.0]).unwrap();
        let adot = VectorField::from_fn(g, |x| [0.1, x[2].cos(), 0.0]).unwrap();
        let state = FieldState::new(a, adot).unwrap();
        let path = dir.path().join("field.json");
        Snapshot::of_field(&state, 1.0).write(&path).unwrap();
        let snap = Snapshot::read(&path).unwrap();
        assert!(snap.clone().into_wavefunction().is_err());
        assert_eq!(snap.into_field_state().unwrap(), state);
    }

    #[test]
    fn truncated_data_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = SpectralGrid::new(4, 3.0, 3).unwrap();
        let psi = WaveFunction::zeros(g).unwrap();
        let path = dir.path().join("psi.json");
        Snapshot::of_wavefunction(&psi, 0.0, None).write(&path).unwrap();
        let bin = dir.path().join("psi.bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 16]).unwrap();
        assert!(matches!(Snapshot::read(&path), Err(Error::Snapshot(_))));
    }
}
