//! Exact Euclidean distance transforms in physical units.
//!
//! Squared distances are computed with the separable lower-envelope algorithm
//! (one pass per axis, linear in the line length), where each axis pass scales
//! index offsets by that axis' spacing. Signed fields are the difference of
//! two complementary transforms measured between voxel centers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Dims, GridSpacing, SdfVolume, VoxelVolume};

/// Squared distance (mm²) from every voxel center to the nearest foreground
/// voxel center.
pub fn squared_edt(mask: &BinaryMask) -> Result<VoxelVolume> {
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let data = squared_edt_raw(mask.dims(), mask.spacing(), |idx| mask.is_set(idx));
    VoxelVolume::from_data(mask.dims(), mask.spacing(), data)
}

/// Signed distance field of a mask: distance to the foreground minus distance
/// to the background, so foreground voxels are negative.
pub fn signed_distance_from_mask(mask: &BinaryMask) -> Result<SdfVolume> {
    let n_fg = mask.count();
    if n_fg == 0 {
        return Err(Error::DegenerateMask("mask has no foreground voxels".into()));
    }
    if n_fg == mask.len() {
        return Err(Error::DegenerateMask("mask has no background voxels".into()));
    }
    let dims = mask.dims();
    let spacing = mask.spacing();
    let (to_fg, to_bg) = rayon::join(
        || squared_edt_raw(dims, spacing, |idx| mask.is_set(idx)),
        || squared_edt_raw(dims, spacing, |idx| !mask.is_set(idx)),
    );
    let data = to_fg.par_iter().zip(&to_bg).map(|(a, b)| a.sqrt() - b.sqrt()).collect();
    Ok(SdfVolume::new_unchecked(VoxelVolume::from_data(dims, spacing, data)?))
}

/// Squared EDT to the voxels where `is_target` holds. Voxels with no target at
/// all get `f64::INFINITY`.
pub(crate) fn squared_edt_raw(
    dims: Dims,
    spacing: GridSpacing,
    is_target: impl Fn(usize) -> bool + Sync,
) -> Vec<f64> {
    let mut data: Vec<f64> = (0..dims.len())
        .into_par_iter()
        .map(|idx| if is_target(idx) { 0.0 } else { f64::INFINITY })
        .collect();
    for axis in 0..3 {
        transform_axis(&mut data, dims, axis, spacing.axis(axis));
    }
    data
}

fn transform_axis(data: &mut [f64], dims: Dims, axis: usize, h: f64) {
    let n = dims.axis(axis);
    if n == 1 {
        return;
    }
    let h2 = h * h;
    let [nx, ny, _] = dims.as_array();
    let slab = nx * ny;
    match axis {
        0 => data.par_chunks_mut(nx).for_each_init(
            || Envelope::new(n),
            |env, row| {
                let mut out = vec![0.0; n];
                env.run(row, &mut out, h2);
                row.copy_from_slice(&out);
            },
        ),
        1 => data.par_chunks_mut(slab).for_each_init(
            || (Envelope::new(n), vec![0.0; n], vec![0.0; n]),
            |(env, line, out), plane| {
                for i in 0..nx {
                    for j in 0..ny {
                        line[j] = plane[i + j * nx];
                    }
                    env.run(line, out, h2);
                    for j in 0..ny {
                        plane[i + j * nx] = out[j];
                    }
                }
            },
        ),
        _ => {
            // Columns along z are strided by a whole slab; transform them from a
            // read-only copy, then scatter.
            let src = data.to_vec();
            let columns: Vec<Vec<f64>> = (0..slab)
                .into_par_iter()
                .map_init(
                    || (Envelope::new(n), vec![0.0; n]),
                    |(env, line), c| {
                        for k in 0..n {
                            line[k] = src[c + k * slab];
                        }
                        let mut out = vec![0.0; n];
                        env.run(line, &mut out, h2);
                        out
                    },
                )
                .collect();
            for (c, col) in columns.iter().enumerate() {
                for (k, v) in col.iter().enumerate() {
                    data[c + k * slab] = *v;
                }
            }
        }
    }
}

/// Scratch space for the 1D lower envelope of parabolas
/// `q -> h²(q - p)² + f(p)`.
struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn new(n: usize) -> Self {
        Self { sites: vec![0; n], bounds: vec![0.0; n + 1] }
    }

    fn run(&mut self, f: &[f64], out: &mut [f64], h2: f64) {
        let n = f.len();
        let mut k: isize = -1;
        for q in 0..n {
            if !f[q].is_finite() {
                continue;
            }
            let fq = f[q] + h2 * (q * q) as f64;
            loop {
                if k < 0 {
                    k = 0;
                    self.sites[0] = q;
                    self.bounds[0] = f64::NEG_INFINITY;
                    self.bounds[1] = f64::INFINITY;
                    break;
                }
                let v = self.sites[k as usize];
                let fv = f[v] + h2 * (v * v) as f64;
                let s = (fq - fv) / (2.0 * h2 * (q - v) as f64);
                if s <= self.bounds[k as usize] {
                    k -= 1;
                    continue;
                }
                k += 1;
                self.sites[k as usize] = q;
                self.bounds[k as usize] = s;
                self.bounds[k as usize + 1] = f64::INFINITY;
                break;
            }
        }
        if k < 0 {
            out.fill(f64::INFINITY);
            return;
        }
        let mut j = 0usize;
        for (q, o) in out.iter_mut().enumerate() {
            while self.bounds[j + 1] < q as f64 {
                j += 1;
            }
            let p = self.sites[j];
            let d = q as f64 - p as f64;
            *o = h2 * d * d + f[p];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_mask(values: &[f64], spacing: GridSpacing) -> BinaryMask {
        let dims = Dims::new(values.len(), 1, 1).unwrap();
        BinaryMask::new(VoxelVolume::from_data(dims, spacing, values.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn squared_edt_small_line() {
        let m = line_mask(&[0.0, 1.0, 0.0], GridSpacing::unit());
        assert_eq!(squared_edt(&m).unwrap().data(), &[1.0, 0.0, 1.0]);

        let m = line_mask(&[0.0, 1.0, 0.0], GridSpacing::new(2.0, 1.0, 7.0).unwrap());
        assert_eq!(squared_edt(&m).unwrap().data(), &[4.0, 0.0, 4.0]);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let m = line_mask(&[0.0, 0.0], GridSpacing::unit());
        assert!(matches!(squared_edt(&m), Err(Error::EmptyMask)));
    }

    #[test]
    fn signed_line() {
        let m = line_mask(&[0.0, 1.0, 0.0], GridSpacing::unit());
        assert_eq!(signed_distance_from_mask(&m).unwrap().data(), &[1.0, -1.0, 1.0]);
    }

    #[test]
    fn degenerate_masks() {
        let m = line_mask(&[1.0, 1.0, 1.0], GridSpacing::unit());
        assert!(matches!(signed_distance_from_mask(&m), Err(Error::DegenerateMask(_))));
        let m = line_mask(&[0.0, 0.0, 0.0], GridSpacing::unit());
        assert!(matches!(signed_distance_from_mask(&m), Err(Error::DegenerateMask(_))));
    }

    #[test]
    fn envelope_handles_lines_without_targets() {
        // Foreground only in one row: other rows rely on the y/z passes.
        let dims = Dims::new(4, 3, 2).unwrap();
        let m = BinaryMask::from_fn(dims, GridSpacing::unit(), |idx| idx == dims.index(3, 0, 0));
        let d = squared_edt(&m).unwrap();
        assert_eq!(d.get(0, 2, 1), 9.0 + 4.0 + 1.0);
    }
}
