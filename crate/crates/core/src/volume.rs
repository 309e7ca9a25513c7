//! Dense voxel grids with anisotropic physical spacing.
//!
//! Samples sit at voxel centers: voxel `(i, j, k)` is at `(i*dx, j*dy, k*dz)`
//! millimetres, with the origin at voxel `(0, 0, 0)`. Data is laid out
//! x-fastest, matching the raw on-disk format.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical voxel size in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpacing {
    dx: f64,
    dy: f64,
    dz: f64,
}

impl GridSpacing {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        for (name, v) in [("dx", dx), ("dy", dy), ("dz", dz)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("spacing {name} must be positive, got {v}")));
            }
        }
        Ok(Self { dx, dy, dz })
    }

    pub fn isotropic(h: f64) -> Result<Self> {
        Self::new(h, h, h)
    }

    pub fn unit() -> Self {
        Self { dx: 1.0, dy: 1.0, dz: 1.0 }
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    /// Slice-thickness ratio `dz / dx`.
    pub fn gamma(&self) -> f64 {
        self.dz / self.dx
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }

    pub fn axis(&self, axis: usize) -> f64 {
        self.as_array()[axis]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }
}

impl Default for GridSpacing {
    fn default() -> Self {
        Self::unit()
    }
}

/// Voxel counts along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid(format!("dimensions must be >= 1, got ({nx}, {ny}, {nz})")));
        }
        nx.checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| Error::invalid("dimensions overflow"))?;
        Ok(Self { nx, ny, nz })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn axis(&self, axis: usize) -> usize {
        self.as_array()[axis]
    }

    /// Distance between consecutive samples along `axis` in the linear layout.
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.nx,
            _ => self.nx * self.ny,
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        [i, j, k]
    }

    pub fn contains(&self, ijk: [usize; 3]) -> bool {
        ijk[0] < self.nx && ijk[1] < self.ny && ijk[2] < self.nz
    }
}

/// Dense scalar grid. The only mutation paths are [`VoxelVolume::data_mut`]
/// and [`VoxelVolume::set`].
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    dims: Dims,
    spacing: GridSpacing,
    data: Vec<f64>,
}

impl VoxelVolume {
    pub fn new(dims: Dims, spacing: GridSpacing, fill: f64) -> Self {
        Self { dims, spacing, data: vec![fill; dims.len()] }
    }

    /// Checked constructor from raw voxel counts.
    pub fn create(dims: [usize; 3], spacing: GridSpacing, fill: f64) -> Result<Self> {
        Ok(Self::new(Dims::new(dims[0], dims[1], dims[2])?, spacing, fill))
    }

    pub fn from_data(dims: Dims, spacing: GridSpacing, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::invalid(format!(
                "data length {} does not match dims {}x{}x{} = {}",
                data.len(),
                dims.nx,
                dims.ny,
                dims.nz,
                dims.len()
            )));
        }
        Ok(Self { dims, spacing, data })
    }

    /// Samples `f(world_position)` at every voxel center.
    pub fn from_fn(dims: Dims, spacing: GridSpacing, f: impl Fn([f64; 3]) -> f64) -> Self {
        let data = (0..dims.len())
            .map(|idx| {
                let [i, j, k] = dims.coords(idx);
                f([i as f64 * spacing.dx, j as f64 * spacing.dy, k as f64 * spacing.dz])
            })
            .collect();
        Self { dims, spacing, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> GridSpacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.dims.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let idx = self.dims.index(i, j, k);
        self.data[idx] = value;
    }

    pub fn index_to_world(&self, ijk: [usize; 3]) -> Result<[f64; 3]> {
        if !self.dims.contains(ijk) {
            return Err(Error::invalid(format!(
                "index {:?} outside dims {:?}",
                ijk,
                self.dims.as_array()
            )));
        }
        Ok(self.world_unchecked(ijk))
    }

    #[inline]
    pub(crate) fn world_unchecked(&self, ijk: [usize; 3]) -> [f64; 3] {
        [
            ijk[0] as f64 * self.spacing.dx,
            ijk[1] as f64 * self.spacing.dy,
            ijk[2] as f64 * self.spacing.dz,
        ]
    }

    /// Nearest voxel to a physical position, or `None` outside the grid.
    pub fn world_to_nearest_index(&self, p: [f64; 3]) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for axis in 0..3 {
            let r = (p[axis] / self.spacing.axis(axis)).round();
            if !(r >= 0.0 && r < self.dims.axis(axis) as f64) {
                return None;
            }
            out[axis] = r as usize;
        }
        Some(out)
    }

    /// Same dims and spacing.
    pub fn same_grid(&self, other: &VoxelVolume) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    pub(crate) fn check_same_grid(&self, other: &VoxelVolume, what: &str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::invalid(format!(
                "{what}: dims {:?} vs {:?}",
                self.dims.as_array(),
                other.dims.as_array()
            )));
        }
        if self.spacing != other.spacing {
            return Err(Error::invalid(format!(
                "{what}: spacing {:?} vs {:?}",
                self.spacing.as_array(),
                other.spacing.as_array()
            )));
        }
        Ok(())
    }

    /// Length of the physical diagonal between the first and last voxel centers.
    pub fn diagonal(&self) -> f64 {
        let [nx, ny, nz] = self.dims.as_array();
        let ex = (nx - 1) as f64 * self.spacing.dx;
        let ey = (ny - 1) as f64 * self.spacing.dy;
        let ez = (nz - 1) as f64 * self.spacing.dz;
        (ex * ex + ey * ey + ez * ez).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> VoxelVolume {
        VoxelVolume {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

macro_rules! volume_newtype {
    ($name:ident) => {
        impl Deref for $name {
            type Target = VoxelVolume;
            fn deref(&self) -> &VoxelVolume {
                &self.0
            }
        }

        impl $name {
            pub fn as_volume(&self) -> &VoxelVolume {
                &self.0
            }

            pub fn into_volume(self) -> VoxelVolume {
                self.0
            }
        }
    };
}

/// Occupancy probabilities or labels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyVolume(VoxelVolume);
volume_newtype!(OccupancyVolume);

impl OccupancyVolume {
    pub fn new(vol: VoxelVolume) -> Result<Self> {
        if let Some((idx, v)) = vol.data.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("occupancy sample {idx} = {v} outside [0, 1]")));
        }
        Ok(Self(vol))
    }

    pub fn is_hard(&self) -> bool {
        self.0.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Voxels with occupancy `>= threshold`.
    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        BinaryMask(self.0.map(|v| if v >= threshold { 1.0 } else { 0.0 }))
    }
}

impl From<BinaryMask> for OccupancyVolume {
    fn from(mask: BinaryMask) -> Self {
        Self(mask.0)
    }
}

/// Signed distances in millimetres, negative inside.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfVolume(VoxelVolume);
volume_newtype!(SdfVolume);

impl SdfVolume {
    pub fn new(vol: VoxelVolume) -> Result<Self> {
        if let Some(idx) = vol.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("SDF sample {idx} is not finite")));
        }
        Ok(Self(vol))
    }

    pub(crate) fn new_unchecked(vol: VoxelVolume) -> Self {
        Self(vol)
    }
}

/// Foreground (1) / background (0) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask(VoxelVolume);
volume_newtype!(BinaryMask);

impl BinaryMask {
    pub fn new(vol: VoxelVolume) -> Result<Self> {
        if let Some((idx, v)) = vol.data.iter().enumerate().find(|(_, v)| **v != 0.0 && **v != 1.0) {
            return Err(Error::invalid(format!("mask sample {idx} = {v} is not 0 or 1")));
        }
        Ok(Self(vol))
    }

    pub fn from_fn(dims: Dims, spacing: GridSpacing, inside: impl Fn(usize) -> bool) -> Self {
        let data = (0..dims.len()).map(|idx| if inside(idx) { 1.0 } else { 0.0 }).collect();
        Self(VoxelVolume { dims, spacing, data })
    }

    pub fn empty(dims: Dims, spacing: GridSpacing) -> Self {
        Self(VoxelVolume::new(dims, spacing, 0.0))
    }

    #[inline]
    pub fn is_set(&self, idx: usize) -> bool {
        self.0.data[idx] != 0.0
    }

    pub fn count(&self) -> usize {
        self.0.data.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn set_voxel(&mut self, idx: usize, on: bool) {
        self.0.data[idx] = if on { 1.0 } else { 0.0 };
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask(self.0.map(|v| 1.0 - v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn create_fills_and_validates() {
        let v = VoxelVolume::create([2, 2, 2], GridSpacing::unit(), 0.0).unwrap();
        assert_eq!(v.data(), &[0.0; 8]);

        let s = GridSpacing::new(1.0, 1.0, 2.0).unwrap();
        let v = VoxelVolume::create([1, 1, 1], s, 5.0).unwrap();
        assert_eq!(v.data(), &[5.0]);
        assert_eq!(v.spacing().gamma(), 2.0);

        assert!(matches!(
            VoxelVolume::create([0, 1, 1], GridSpacing::unit(), 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(GridSpacing::new(1.0, 0.0, 1.0).is_err());
        assert!(GridSpacing::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn index_to_world_uses_voxel_centers() {
        let s = GridSpacing::new(1.0, 1.0, 4.0).unwrap();
        let v = VoxelVolume::create([3, 3, 3], s, 0.0).unwrap();
        assert_eq!(v.index_to_world([2, 0, 1]).unwrap(), [2.0, 0.0, 4.0]);
        assert_eq!(v.index_to_world([0, 0, 0]).unwrap(), [0.0, 0.0, 0.0]);
        assert!(v.index_to_world([3, 3, 3]).is_err());
        assert!(v.index_to_world([0, 3, 0]).is_err());
    }

    #[test]
    fn linear_layout_is_x_fastest() {
        let d = Dims::new(3, 4, 5).unwrap();
        assert_eq!(d.index(1, 0, 0), 1);
        assert_eq!(d.index(0, 1, 0), 3);
        assert_eq!(d.index(0, 0, 1), 12);
        for idx in 0..d.len() {
            let [i, j, k] = d.coords(idx);
            assert_eq!(d.index(i, j, k), idx);
        }
    }

    #[test]
    fn newtype_validation() {
        let d = Dims::cube(2).unwrap();
        let s = GridSpacing::unit();
        assert!(OccupancyVolume::new(VoxelVolume::new(d, s, 1.5)).is_err());
        assert!(BinaryMask::new(VoxelVolume::new(d, s, 0.5)).is_err());
        assert!(SdfVolume::new(VoxelVolume::new(d, s, f64::INFINITY)).is_err());
        let occ = OccupancyVolume::new(VoxelVolume::new(d, s, 0.5)).unwrap();
        assert!(!occ.is_hard());
        assert_eq!(occ.threshold(0.5).count(), 8);
    }

    proptest::proptest! {
        #[test]
        fn world_index_round_trip(
            nx in 1usize..12, ny in 1usize..12, nz in 1usize..12,
            dx in 0.1f64..3.0, dy in 0.1f64..3.0, dz in 0.1f64..6.0,
            seed in 0usize..10_000,
        ) {
            let v = VoxelVolume::create([nx, ny, nz], GridSpacing::new(dx, dy, dz).unwrap(), 0.0).unwrap();
            let idx = seed % v.len();
            let ijk = v.dims().coords(idx);
            let p = v.index_to_world(ijk).unwrap();
            proptest::prop_assert_eq!(v.world_to_nearest_index(p), Some(ijk));
        }
    }
}
