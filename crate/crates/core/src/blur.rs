//! Separable truncated Gaussian blur with half-sample symmetric padding.
//!
//! Padding mirrors about the outer voxel faces (`c b a | a b c`), which with a
//! symmetric kernel makes every 1D pass a symmetric matrix with unit row and
//! column sums: the blur preserves constants, conserves mass, and is its own
//! adjoint. Per-axis widths are `sigma * dx / spacing[axis]` voxels so the
//! physical footprint is isotropic.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{Dims, VoxelVolume};

/// Sampled Gaussian truncated at `ceil(3 sigma)` and renormalized to sum 1.
/// Index `r` of the result is the center tap.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|t| {
            let x = t as f64 - radius as f64;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Half-sample symmetric reflection of `i` into `0..n`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Per-axis blur widths in voxels for a sigma given in x-voxels.
pub fn axis_sigmas(vol: &VoxelVolume, sigma: f64) -> [f64; 3] {
    let s = vol.spacing();
    [sigma, sigma * s.dx() / s.dy(), sigma * s.dx() / s.dz()]
}

pub fn gaussian_blur_3d(vol: &VoxelVolume, sigma: f64) -> Result<VoxelVolume> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("blur sigma must be positive, got {sigma}")));
    }
    let dims = vol.dims();
    let sigmas = axis_sigmas(vol, sigma);
    let mut cur = vol.data().to_vec();
    let mut next = vec![0.0; cur.len()];
    for (axis, &s) in sigmas.iter().enumerate() {
        let kernel = gaussian_kernel(s);
        if kernel.len() == 1 {
            continue;
        }
        convolve_axis(&cur, &mut next, dims, axis, &kernel);
        std::mem::swap(&mut cur, &mut next);
    }
    VoxelVolume::from_data(dims, vol.spacing(), cur)
}

fn convolve_axis(src: &[f64], dst: &mut [f64], dims: Dims, axis: usize, kernel: &[f64]) {
    let [nx, ny, nz] = dims.as_array();
    let slab = nx * ny;
    let r = (kernel.len() / 2) as isize;
    match axis {
        0 => dst
            .par_chunks_mut(nx)
            .zip(src.par_chunks(nx))
            .for_each(|(out, row)| convolve_line(row, out, kernel)),
        1 => dst.par_chunks_mut(slab).enumerate().for_each(|(k, out)| {
            let plane = &src[k * slab..(k + 1) * slab];
            out.fill(0.0);
            for j in 0..ny {
                let o = &mut out[j * nx..(j + 1) * nx];
                for (t, w) in kernel.iter().enumerate() {
                    let jj = reflect(j as isize + t as isize - r, ny);
                    axpy(*w, &plane[jj * nx..(jj + 1) * nx], o);
                }
            }
        }),
        _ => dst.par_chunks_mut(slab).enumerate().for_each(|(k, out)| {
            out.fill(0.0);
            for (t, w) in kernel.iter().enumerate() {
                let kk = reflect(k as isize + t as isize - r, nz);
                axpy(*w, &src[kk * slab..(kk + 1) * slab], out);
            }
        }),
    }
}

#[inline]
fn axpy(w: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += w * xi;
    }
}

fn convolve_line(row: &[f64], out: &mut [f64], kernel: &[f64]) {
    let n = row.len();
    let r = kernel.len() / 2;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        if i >= r && i + r < n {
            let window = &row[i - r..=i + r];
            for (w, v) in kernel.iter().zip(window) {
                acc += w * v;
            }
        } else {
            for (t, w) in kernel.iter().enumerate() {
                acc += w * row[reflect(i as isize + t as isize - r as isize, n)];
            }
        }
        *o = acc;
    }
}
