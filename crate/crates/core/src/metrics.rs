//! Volumetric overlap scores and sampled surface distances.
//!
//! `jd` is a Jaccard index restricted to boundary shells (a similarity, higher
//! is better). Chamfer distances are reported multiplied by 100.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edt::squared_edt_raw;
use crate::error::{Error, Result};
use crate::reduce::deterministic_sum;
use crate::volume::{BinaryMask, GridSpacing, SdfVolume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeScores {
    pub dice: f64,
    pub iou: f64,
    pub jd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceScores {
    pub chamfer_x100: f64,
    pub hausdorff: f64,
}

pub const DEFAULT_SHELL_RADIUS: f64 = 1.0;

fn overlap_counts(a: &BinaryMask, b: &BinaryMask) -> Result<(usize, usize, usize)> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!(
            "mask dims {:?} vs {:?}",
            a.dims().as_array(),
            b.dims().as_array()
        )));
    }
    let (na, nb, both) = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = (a.is_set(i), b.is_set(i));
            (x as usize, y as usize, (x && y) as usize)
        })
        .reduce(|| (0, 0, 0), |p, q| (p.0 + q.0, p.1 + q.1, p.2 + q.2));
    Ok((na, nb, both))
}

/// `2 |A ∩ B| / (|A| + |B|)`, 1 when both are empty.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (na, nb, both) = overlap_counts(a, b)?;
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// `|A ∩ B| / |A ∪ B|`, 1 when both are empty.
pub fn volume_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (na, nb, both) = overlap_counts(a, b)?;
    let union = na + nb - both;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(both as f64 / union as f64)
}

/// Voxels that differ from at least one in-grid 6-neighbour.
pub fn boundary_voxels(m: &BinaryMask) -> Vec<bool> {
    let dims = m.dims();
    (0..m.len())
        .into_par_iter()
        .map(|idx| {
            let c = dims.coords(idx);
            let me = m.is_set(idx);
            (0..3).any(|axis| {
                let stride = dims.stride(axis);
                (c[axis] > 0 && m.is_set(idx - stride) != me)
                    || (c[axis] + 1 < dims.axis(axis) && m.is_set(idx + stride) != me)
            })
        })
        .collect()
}

/// Voxels within `radius` voxels (Euclidean, index space) of the mask boundary.
pub fn boundary_shell(m: &BinaryMask, radius: f64) -> Vec<bool> {
    let boundary = boundary_voxels(m);
    if !boundary.iter().any(|&b| b) {
        return boundary;
    }
    let d2 = squared_edt_raw(m.dims(), GridSpacing::unit(), |idx| boundary[idx]);
    let r2 = radius * radius;
    d2.into_iter().map(|d| d <= r2).collect()
}

/// Jaccard index of the two masks' boundary shells; 1 when both are empty.
pub fn jaccard_shell(a: &BinaryMask, b: &BinaryMask, shell_radius: f64) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!(
            "mask dims {:?} vs {:?}",
            a.dims().as_array(),
            b.dims().as_array()
        )));
    }
    if !(shell_radius >= 1.0) {
        return Err(Error::invalid(format!("shell radius must be >= 1, got {shell_radius}")));
    }
    let (sa, sb) = rayon::join(|| boundary_shell(a, shell_radius), || boundary_shell(b, shell_radius));
    let (inter, union) = sa
        .par_iter()
        .zip(&sb)
        .map(|(&x, &y)| ((x && y) as usize, (x || y) as usize))
        .reduce(|| (0, 0), |p, q| (p.0 + q.0, p.1 + q.1));
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

pub fn volume_scores(pred: &BinaryMask, truth: &BinaryMask, shell_radius: f64) -> Result<VolumeScores> {
    Ok(VolumeScores {
        dice: dice(pred, truth)?,
        iou: volume_iou(pred, truth)?,
        jd: jaccard_shell(pred, truth, shell_radius)?,
    })
}

/// `f < 0`.
pub fn occupancy_from_sdf(f: &SdfVolume) -> BinaryMask {
    BinaryMask::from_fn(f.dims(), f.spacing(), |idx| f.data()[idx] < 0.0)
}

/// Uniform-grid point index with exact nearest-neighbour queries.
pub struct PointIndex<'a> {
    points: &'a [[f64; 3]],
    origin: [f64; 3],
    upper: [f64; 3],
    cell: f64,
    res: [usize; 3],
    starts: Vec<usize>,
    order: Vec<u32>,
}

impl<'a> PointIndex<'a> {
    pub fn new(points: &'a [[f64; 3]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point set is empty"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("point set contains non-finite coordinates"));
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let ext = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let max_ext = ext.iter().cloned().fold(0.0, f64::max);
        // About eight points per cell, capped to keep the table small.
        let target_cells = (points.len() / 8).clamp(1, 1 << 21) as f64;
        let box_volume = ext.iter().map(|e| e.max(max_ext * 1e-3).max(1e-12)).product::<f64>();
        let mut cell = (box_volume / target_cells).cbrt();
        if !(cell > 0.0) || !cell.is_finite() {
            cell = 1.0;
        }
        let res = [0, 1, 2].map(|a| ((ext[a] / cell).floor() as usize + 1).min(1 << 10));
        let cell = (0..3).map(|a| ext[a] / res[a] as f64).fold(cell, f64::max).max(1e-12);
        let n_cells = res[0] * res[1] * res[2];
        let mut counts = vec![0usize; n_cells + 1];
        let cell_ids: Vec<usize> = points
            .iter()
            .map(|p| {
                let c = Self::cell_coords(p, lo, cell, res);
                c[0] + res[0] * (c[1] + res[1] * c[2])
            })
            .collect();
        for &c in &cell_ids {
            counts[c + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0u32; points.len()];
        for (pi, &c) in cell_ids.iter().enumerate() {
            order[fill[c]] = pi as u32;
            fill[c] += 1;
        }
        Ok(Self { points, origin: lo, upper: hi, cell, res, starts: counts, order })
    }

    fn cell_coords(p: &[f64; 3], lo: [f64; 3], cell: f64, res: [usize; 3]) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let c = ((p[a] - lo[a]) / cell).floor();
            if c <= 0.0 {
                0
            } else {
                (c as usize).min(res[a] - 1)
            }
        })
    }

    /// Squared distance to the nearest indexed point.
    pub fn nearest_sq(&self, q: [f64; 3]) -> f64 {
        let center = Self::cell_coords(&q, self.origin, self.cell, self.res);
        let mut best = f64::INFINITY;
        // Squared distance from q to the points' bounding box. Writing c for
        // q clamped to the box, |q - p|^2 >= |q - c|^2 + |c - p|^2 for every
        // indexed p, and cells in ring r lie at least (r - 1) cells from c.
        let outside: f64 = (0..3)
            .map(|a| {
                let d = (self.origin[a] - q[a]).max(q[a] - self.upper[a]).max(0.0);
                d * d
            })
            .sum();
        let max_ring = *self.res.iter().max().unwrap();
        for ring in 0..=max_ring {
            let lower = ring.saturating_sub(1) as f64 * self.cell;
            if outside + lower * lower > best {
                break;
            }
            let r = ring as isize;
            let lo = [0, 1, 2].map(|a| center[a] as isize - r);
            let hi = [0, 1, 2].map(|a| center[a] as isize + r);
            for z in lo[2].max(0)..=hi[2].min(self.res[2] as isize - 1) {
                for y in lo[1].max(0)..=hi[1].min(self.res[1] as isize - 1) {
                    let on_shell_yz = z == lo[2] || z == hi[2] || y == lo[1] || y == hi[1];
                    let mut x = lo[0].max(0);
                    let x_end = hi[0].min(self.res[0] as isize - 1);
                    while x <= x_end {
                        if !(on_shell_yz || x == lo[0] || x == hi[0]) {
                            // Jump straight to the far face of the shell.
                            x = hi[0];
                            continue;
                        }
                        let cell = [x as usize, y as usize, z as usize];
                        x += 1;
                        if self.cell_dist_sq(cell, q) > best {
                            continue;
                        }
                        let c = cell[0] + self.res[0] * (cell[1] + self.res[1] * cell[2]);
                        for &pi in &self.order[self.starts[c]..self.starts[c + 1]] {
                            let p = self.points[pi as usize];
                            let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                            if d < best {
                                best = d;
                            }
                        }
                    }
                }
            }
        }
        best
    }

    /// Squared distance from `q` to the box of `cell`. The last cell along
    /// each axis extends to the points' upper bound.
    fn cell_dist_sq(&self, cell: [usize; 3], q: [f64; 3]) -> f64 {
        (0..3)
            .map(|a| {
                let lo = self.origin[a] + cell[a] as f64 * self.cell;
                let hi = if cell[a] + 1 == self.res[a] {
                    self.upper[a].max(lo + self.cell)
                } else {
                    lo + self.cell
                };
                let d = (lo - q[a]).max(q[a] - hi).max(0.0);
                d * d
            })
            .sum()
    }
}

/// Nearest-neighbour distances from every query point to `targets`.
pub fn nearest_distances(queries: &[[f64; 3]], targets: &[[f64; 3]]) -> Result<Vec<f64>> {
    let index = PointIndex::new(targets)?;
    Ok(queries.par_iter().map(|q| index.nearest_sq(*q).sqrt()).collect())
}

fn directed(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("surface metrics need non-empty point sets"));
    }
    nearest_distances(a, b)
}

/// Symmetric mean nearest-neighbour distance (mm, not scaled).
pub fn chamfer(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    let ab = directed(a, b)?;
    let ba = directed(b, a)?;
    Ok(0.5 * (deterministic_sum(&ab) / ab.len() as f64 + deterministic_sum(&ba) / ba.len() as f64))
}

/// Largest nearest-neighbour distance in either direction (mm).
pub fn hausdorff(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    let ab = directed(a, b)?;
    let ba = directed(b, a)?;
    Ok(ab.iter().chain(&ba).cloned().fold(0.0, f64::max))
}

pub fn surface_scores(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<SurfaceScores> {
    let ab = directed(a, b)?;
    let ba = directed(b, a)?;
    let cd = 0.5 * (deterministic_sum(&ab) / ab.len() as f64 + deterministic_sum(&ba) / ba.len() as f64);
    let hd = ab.iter().chain(&ba).cloned().fold(0.0, f64::max);
    Ok(SurfaceScores { chamfer_x100: 100.0 * cd, hausdorff: hd })
}
