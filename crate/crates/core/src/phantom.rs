//! Synthetic vessel phantoms: capsule trees with near-exact SDFs, and a
//! degradation model for sparse, noisy slice acquisitions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{streams, CounterRng};
use crate::volume::{BinaryMask, Dims, GridSpacing, OccupancyVolume, SdfVolume, VoxelVolume};

/// Centerline graph in mm. Each edge is a capsule whose radius is linearly
/// interpolated between its endpoint radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenterlineTree {
    pub nodes: Vec<[f64; 3]>,
    pub radii: Vec<f64>,
    pub edges: Vec<[usize; 2]>,
}

impl CenterlineTree {
    /// Checks the tree is connected and acyclic with positive radii, and that
    /// every node lies inside the grid's physical extent.
    pub fn validate(&self, dims: Dims, spacing: GridSpacing) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::invalid("tree has no nodes"));
        }
        if self.radii.len() != n {
            return Err(Error::invalid(format!("{} radii for {} nodes", self.radii.len(), n)));
        }
        if let Some(r) = self.radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::invalid(format!("radius must be > 0, got {r}")));
        }
        if self.edges.len() + 1 != n {
            return Err(Error::invalid(format!(
                "a tree with {n} nodes needs {} edges, got {}",
                n - 1,
                self.edges.len()
            )));
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &[a, b] in &self.edges {
            if a >= n || b >= n || a == b {
                return Err(Error::invalid(format!("bad edge ({a}, {b})")));
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return Err(Error::invalid("centerline graph has a cycle"));
            }
            parent[ra] = rb;
        }
        let extent = [
            (dims.nx - 1) as f64 * spacing.dx(),
            (dims.ny - 1) as f64 * spacing.dy(),
            (dims.nz - 1) as f64 * spacing.dz(),
        ];
        for (i, p) in self.nodes.iter().enumerate() {
            for a in 0..3 {
                if !(p[a] >= 0.0 && p[a] <= extent[a]) {
                    return Err(Error::invalid(format!("node {i} at {p:?} lies outside the grid")));
                }
            }
        }
        Ok(())
    }

    /// Signed distance from `p` to the union of capsules.
    pub fn distance(&self, p: [f64; 3]) -> f64 {
        self.edges
            .iter()
            .map(|&[a, b]| {
                let (pa, pb) = (self.nodes[a], self.nodes[b]);
                let (d, t) = point_segment(p, pa, pb);
                d - (self.radii[a] + t * (self.radii[b] - self.radii[a]))
            })
            .fold(f64::INFINITY, f64::min)
            .min(if self.edges.is_empty() {
                let d = dist(p, self.nodes[0]);
                d - self.radii[0]
            } else {
                f64::INFINITY
            })
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Distance from `p` to segment `ab` and the clamped parameter of the
/// closest point.
pub fn point_segment(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> (f64, f64) {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let c = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    (dist(p, c), t)
}

pub fn tree_sdf(tree: &CenterlineTree, dims: Dims, spacing: GridSpacing) -> Result<SdfVolume> {
    tree.validate(dims, spacing)?;
    let data = (0..dims.len())
        .into_par_iter()
        .map(|idx| {
            let [i, j, k] = dims.coords(idx);
            tree.distance([i as f64 * spacing.dx(), j as f64 * spacing.dy(), k as f64 * spacing.dz()])
        })
        .collect();
    SdfVolume::new(VoxelVolume::from_data(dims, spacing, data)?)
}

pub fn tree_mask(tree: &CenterlineTree, dims: Dims, spacing: GridSpacing) -> Result<BinaryMask> {
    let sdf = tree_sdf(tree, dims, spacing)?;
    Ok(crate::metrics::occupancy_from_sdf(&sdf))
}

/// Simulated acquisition: only every `keep_every_k_slices`-th z slice is
/// observed, and observed slices carry label flips and spurious blobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradeSpec {
    pub keep_every_k_slices: usize,
    pub flip_probability: f64,
    pub speckle_count: usize,
    /// Ball radius in x-voxels.
    pub speckle_radius: f64,
    pub seed: u64,
}

impl DegradeSpec {
    pub fn identity() -> Self {
        Self { keep_every_k_slices: 1, flip_probability: 0.0, speckle_count: 0, speckle_radius: 1.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.keep_every_k_slices == 0 {
            return Err(Error::invalid("keep_every_k_slices must be >= 1"));
        }
        if !(self.flip_probability >= 0.0 && self.flip_probability < 0.5) {
            return Err(Error::invalid(format!(
                "flip_probability must lie in [0, 0.5), got {}",
                self.flip_probability
            )));
        }
        if !(self.speckle_radius.is_finite() && self.speckle_radius >= 0.0) {
            return Err(Error::invalid("speckle_radius must be >= 0"));
        }
        Ok(())
    }

    pub fn is_kept(&self, k: usize) -> bool {
        k.is_multiple_of(self.keep_every_k_slices)
    }
}

impl Default for DegradeSpec {
    fn default() -> Self {
        Self { keep_every_k_slices: 2, flip_probability: 0.02, speckle_count: 20, speckle_radius: 2.0, seed: 7 }
    }
}

/// Applies, in order: zeroing of unobserved slices, independent label flips
/// on observed slices, then speckle balls (observed slices only).
pub fn degrade(mask: &BinaryMask, spec: &DegradeSpec) -> Result<OccupancyVolume> {
    spec.validate()?;
    let dims = mask.dims();
    let spacing = mask.spacing();
    let slab = dims.nx * dims.ny;
    let flip = CounterRng::new(spec.seed, streams::FLIP);
    let mut data: Vec<f64> = (0..dims.len())
        .into_par_iter()
        .map(|idx| {
            if !spec.is_kept(idx / slab) {
                return 0.0;
            }
            let on = mask.is_set(idx);
            let flipped = spec.flip_probability > 0.0 && flip.f64_at(idx as u64) < spec.flip_probability;
            if on != flipped {
                1.0
            } else {
                0.0
            }
        })
        .collect();

    let mut rng = CounterRng::new(spec.seed, streams::SPECKLE).sequence();
    let kept: Vec<usize> = (0..dims.nz).filter(|&k| spec.is_kept(k)).collect();
    let r_mm = spec.speckle_radius * spacing.dx();
    for _ in 0..spec.speckle_count {
        let ci = rng.next_below(dims.nx as u64) as usize;
        let cj = rng.next_below(dims.ny as u64) as usize;
        let ck = kept[rng.next_below(kept.len() as u64) as usize];
        let c = [ci as f64 * spacing.dx(), cj as f64 * spacing.dy(), ck as f64 * spacing.dz()];
        let reach = |h: f64, n: usize, center: usize| {
            let r = (r_mm / h).floor() as usize;
            (center.saturating_sub(r), (center + r).min(n - 1))
        };
        let (i0, i1) = reach(spacing.dx(), dims.nx, ci);
        let (j0, j1) = reach(spacing.dy(), dims.ny, cj);
        let (k0, k1) = reach(spacing.dz(), dims.nz, ck);
        for k in (k0..=k1).filter(|&k| spec.is_kept(k)) {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let p = [i as f64 * spacing.dx(), j as f64 * spacing.dy(), k as f64 * spacing.dz()];
                    if dist(p, c) <= r_mm {
                        data[dims.index(i, j, k)] = 1.0;
                    }
                }
            }
        }
    }
    OccupancyVolume::new(VoxelVolume::from_data(dims, spacing, data)?)
}

/// Named phantom: grid, centerline tree and default degradation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub name: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub tree: CenterlineTree,
    pub degrade: DegradeSpec,
}

pub const PRESETS: [&str; 3] = ["tube64", "ybranch96", "slab128"];

impl PhantomSpec {
    pub fn preset(name: &str) -> Result<Self> {
        let spec = match name {
            // Straight vessel crossing every slice.
            "tube64" => PhantomSpec {
                name: name.into(),
                dims: [64, 64, 64],
                spacing: [1.0, 1.0, 1.0],
                tree: CenterlineTree {
                    nodes: vec![[32.0, 30.0, 0.0], [32.0, 34.0, 63.0]],
                    radii: vec![5.0, 5.0],
                    edges: vec![[0, 1]],
                },
                degrade: DegradeSpec::default(),
            },
            // Trunk entering through z = 0 and splitting into two branches
            // that leave through z = max.
            "ybranch96" => PhantomSpec {
                name: name.into(),
                dims: [96, 96, 96],
                spacing: [1.0, 1.0, 1.0],
                tree: CenterlineTree {
                    nodes: vec![[48.0, 48.0, 0.0], [48.0, 48.0, 44.0], [22.0, 48.0, 95.0], [74.0, 48.0, 95.0]],
                    radii: vec![6.0, 5.5, 4.5, 4.5],
                    edges: vec![[0, 1], [1, 2], [1, 3]],
                },
                degrade: DegradeSpec::default(),
            },
            // Thick-slice slab: 128 x 128 in-plane, 16 slices of 2.5 mm.
            "slab128" => PhantomSpec {
                name: name.into(),
                dims: [128, 128, 16],
                spacing: [1.0, 1.0, 2.5],
                tree: CenterlineTree {
                    nodes: vec![[0.0, 64.0, 16.0], [60.0, 64.0, 20.0], [127.0, 24.0, 18.0], [127.0, 104.0, 22.0]],
                    radii: vec![6.0, 5.5, 4.5, 4.5],
                    edges: vec![[0, 1], [1, 2], [1, 3]],
                },
                degrade: DegradeSpec::default(),
            },
            other => {
                return Err(Error::invalid(format!(
                    "unknown phantom preset '{other}' (available: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(spec)
    }

    pub fn grid(&self) -> Result<(Dims, GridSpacing)> {
        let [nx, ny, nz] = self.dims;
        let [dx, dy, dz] = self.spacing;
        Ok((Dims::new(nx, ny, nz)?, GridSpacing::new(dx, dy, dz)?))
    }

    pub fn validate(&self) -> Result<()> {
        let (dims, spacing) = self.grid()?;
        self.tree.validate(dims, spacing)?;
        self.degrade.validate()
    }

    pub fn generate(&self) -> Result<Phantom> {
        self.validate()?;
        let (dims, spacing) = self.grid()?;
        let sdf = tree_sdf(&self.tree, dims, spacing)?;
        let mask = crate::metrics::occupancy_from_sdf(&sdf);
        let degraded = degrade(&mask, &self.degrade)?;
        Ok(Phantom { sdf, mask, degraded })
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub sdf: SdfVolume,
    pub mask: BinaryMask,
    pub degraded: OccupancyVolume,
}
