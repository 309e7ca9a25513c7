//! File formats: raw volumes with a JSON sidecar, a read-only NIfTI-1 subset,
//! ASCII meshes, metric reports and phantom specs.

mod mesh;
mod nifti;
mod raw;
mod report;

pub use mesh::{write_mesh, MeshFormat};
pub use nifti::read_nifti;
pub use raw::{read_raw, volume_paths, write_volume};
pub use report::{write_report, ReportRow};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::PhantomSpec;
use crate::volume::{Dims, GridSpacing, VoxelVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "f32")]
    F32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ByteOrder {
    #[serde(rename = "le")]
    Little,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Sdf,
    Occupancy,
    Mask,
    Raw,
}

/// Sidecar header of a raw volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub dtype: DType,
    pub byte_order: ByteOrder,
    pub kind: VolumeKind,
}

impl VolumeHeader {
    pub fn new(dims: Dims, spacing: GridSpacing, kind: VolumeKind) -> Self {
        Self { dims: dims.as_array(), spacing: spacing.as_array(), dtype: DType::F32, byte_order: ByteOrder::Little, kind }
    }

    pub fn for_volume(vol: &VoxelVolume, kind: VolumeKind) -> Self {
        Self::new(vol.dims(), vol.spacing(), kind)
    }

    pub fn grid(&self) -> Result<(Dims, GridSpacing)> {
        let [nx, ny, nz] = self.dims;
        let [dx, dy, dz] = self.spacing;
        Ok((Dims::new(nx, ny, nz)?, GridSpacing::new(dx, dy, dz)?))
    }
}

/// Reads a raw volume (`.json`, `.raw` or bare basename) or a NIfTI-1 file
/// (`.nii`).
pub fn read_volume(path: impl AsRef<Path>) -> Result<(VoxelVolume, VolumeHeader)> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("nii") => read_nifti(path),
        _ => read_raw(path),
    }
}

pub fn read_phantom_spec(path: impl AsRef<Path>) -> Result<PhantomSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::format(format!("cannot read phantom spec {}: {e}", path.display())))?;
    let spec: PhantomSpec = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("bad phantom spec {}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

pub fn write_phantom_spec(spec: &PhantomSpec, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(spec).map_err(|e| Error::format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
