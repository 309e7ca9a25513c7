#![allow(dead_code)]

use vesselfield::rng::{CounterRng, RngSequence};
use vesselfield::{BinaryMask, Dims, GridSpacing, SdfVolume, VoxelVolume};

pub fn rng(seed: u64) -> RngSequence {
    CounterRng::new(seed, 0xACCE).sequence()
}

pub fn uniform(r: &mut RngSequence, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.next_f64()
}

pub fn random_mask(r: &mut RngSequence, dims: Dims, spacing: GridSpacing, density: f64) -> BinaryMask {
    let bits: Vec<bool> = (0..dims.len()).map(|_| r.next_f64() < density).collect();
    BinaryMask::from_fn(dims, spacing, |i| bits[i])
}

fn world(dims: Dims, s: GridSpacing, idx: usize) -> [f64; 3] {
    let [i, j, k] = dims.coords(idx);
    [i as f64 * s.dx(), j as f64 * s.dy(), k as f64 * s.dz()]
}

/// O(n^2) signed distance: distance to the nearest foreground voxel minus
/// distance to the nearest background voxel.
pub fn brute_signed_distance(m: &BinaryMask) -> Vec<f64> {
    let dims = m.dims();
    let s = m.spacing();
    let pts: Vec<[f64; 3]> = (0..m.len()).map(|i| world(dims, s, i)).collect();
    (0..m.len())
        .map(|i| {
            let mut to_fg = f64::INFINITY;
            let mut to_bg = f64::INFINITY;
            for (j, p) in pts.iter().enumerate() {
                let d = (p[0] - pts[i][0]).powi(2) + (p[1] - pts[i][1]).powi(2) + (p[2] - pts[i][2]).powi(2);
                if m.is_set(j) {
                    to_fg = to_fg.min(d);
                } else {
                    to_bg = to_bg.min(d);
                }
            }
            to_fg.sqrt() - to_bg.sqrt()
        })
        .collect()
}

/// Largest deviation relative to max(1, |expected|).
pub fn max_rel_err(got: &[f64], expected: &[f64]) -> f64 {
    got.iter().zip(expected).map(|(g, e)| (g - e).abs() / e.abs().max(1.0)).fold(0.0, f64::max)
}

pub fn sphere_sdf(dims: Dims, spacing: GridSpacing, c: [f64; 3], r: f64) -> SdfVolume {
    SdfVolume::new(VoxelVolume::from_fn(dims, spacing, |p| {
        ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt() - r
    }))
    .unwrap()
}

/// Central finite differences of `energy` at every sample of `f`, compared
/// to `grad`: max |fd - grad| / max |grad|, skipping samples for which
/// `skip` holds.
pub fn fd_rel_error(
    f: &VoxelVolume,
    grad: &[f64],
    energy: impl Fn(&VoxelVolume) -> f64,
    skip: impl Fn(usize) -> bool,
) -> f64 {
    let h = 1e-4 * f.max_abs().max(1.0);
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-300);
    let mut worst = 0.0f64;
    let mut probe = f.clone();
    for i in 0..f.len() {
        if skip(i) {
            continue;
        }
        let x = f.data()[i];
        probe.data_mut()[i] = x + h;
        let up = energy(&probe);
        probe.data_mut()[i] = x - h;
        let down = energy(&probe);
        probe.data_mut()[i] = x;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / scale);
    }
    worst
}
