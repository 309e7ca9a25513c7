//! Zero-level-set extraction and mesh connectivity analysis.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc_table::{table, EDGES};
use crate::rng::{streams, CounterRng};
use crate::volume::VoxelVolume;

/// Relative offset (in units of dx) applied to samples that sit exactly on the
/// iso value.
pub const ISO_NUDGE: f64 = 1e-9;

/// Triangle soup with shared vertices, positions in mm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::invalid(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::invalid(format!("triangle {t} repeats a vertex")));
            }
        }
        Ok(())
    }

    pub fn corners(&self, t: usize) -> [[f64; 3]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Enclosed volume by the divergence theorem; positive for closed meshes
    /// with outward-facing triangles.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                dot(a, cross(b, c)) / 6.0
            })
            .sum()
    }

    /// Number of triangles using each undirected edge.
    pub fn edge_use_counts(&self) -> HashMap<(u32, u32), u32> {
        let mut counts = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Every edge shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        self.edge_use_counts().values().all(|&c| c == 2)
    }
}

/// Extracts the `iso` level set with linear interpolation along grid edges.
/// Triangles face toward values above `iso`.
pub fn marching_cubes(f: &VoxelVolume, iso: f64) -> Result<TriangleMesh> {
    if !iso.is_finite() {
        return Err(Error::invalid(format!("iso value must be finite, got {iso}")));
    }
    let dims = f.dims();
    let [nx, ny, nz] = dims.as_array();
    let mut mesh = TriangleMesh::default();
    if nx < 2 || ny < 2 || nz < 2 {
        return Ok(mesh);
    }
    let nudge = iso + ISO_NUDGE * f.spacing().dx();
    let value = |idx: usize| {
        let v = f.data()[idx];
        if v == iso {
            nudge
        } else {
            v
        }
    };
    let t = table();
    let corner_offset: Vec<usize> = (0..8u8)
        .map(|c| dims.index((c & 1) as usize, ((c >> 1) & 1) as usize, ((c >> 2) & 1) as usize))
        .collect();
    // One slot per (sample, axis) grid edge, assigned in first-use order.
    let mut edge_vertex = vec![u32::MAX; dims.len() * 3];

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let base = dims.index(i, j, k);
                let mut vals = [0.0; 8];
                let mut case = 0usize;
                for c in 0..8 {
                    vals[c] = value(base + corner_offset[c]);
                    if vals[c] < iso {
                        case |= 1 << c;
                    }
                }
                if t.edge_mask[case] == 0 {
                    continue;
                }
                let mut local = [u32::MAX; 12];
                for (e, &(ca, cb, axis)) in EDGES.iter().enumerate() {
                    if t.edge_mask[case] & (1 << e) == 0 {
                        continue;
                    }
                    let a_idx = base + corner_offset[ca as usize];
                    let slot = a_idx * 3 + axis as usize;
                    if edge_vertex[slot] == u32::MAX {
                        let (va, vb) = (vals[ca as usize], vals[cb as usize]);
                        let s = (iso - va) / (vb - va);
                        let mut p = f.world_unchecked(dims.coords(a_idx));
                        p[axis as usize] += s * f.spacing().axis(axis as usize);
                        edge_vertex[slot] = mesh.vertices.len() as u32;
                        mesh.vertices.push(p);
                    }
                    local[e] = edge_vertex[slot];
                }
                for tri in &t.triangles[case] {
                    mesh.triangles.push([local[tri[0] as usize], local[tri[1] as usize], local[tri[2] as usize]]);
                }
            }
        }
    }
    Ok(mesh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentInfo {
    pub triangles: usize,
    pub area: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub count: usize,
    /// Ordered by each component's first triangle.
    pub components: Vec<ComponentInfo>,
}

impl ComponentReport {
    pub fn largest_area_fraction(&self) -> f64 {
        let total: f64 = self.components.iter().map(|c| c.area).sum();
        if total <= 0.0 {
            return 0.0;
        }
        self.components.iter().map(|c| c.area).fold(0.0, f64::max) / total
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n as u32).collect() }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Components of triangles connected through shared vertices.
pub fn connected_components(mesh: &TriangleMesh) -> ComponentReport {
    let mut uf = UnionFind::new(mesh.vertices.len());
    for tri in &mesh.triangles {
        uf.union(tri[0], tri[1]);
        uf.union(tri[1], tri[2]);
    }
    let mut slot_of_root: HashMap<u32, usize> = HashMap::new();
    let mut components: Vec<ComponentInfo> = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let root = uf.find(tri[0]);
        let slot = *slot_of_root.entry(root).or_insert_with(|| {
            components.push(ComponentInfo { triangles: 0, area: 0.0 });
            components.len() - 1
        });
        components[slot].triangles += 1;
        components[slot].area += mesh.triangle_area(t);
    }
    ComponentReport { count: components.len(), components }
}

/// Area-uniform random points on the mesh, reproducible from `seed`.
pub fn surface_samples(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<[f64; 3]>> {
    if mesh.is_empty() {
        return Err(Error::invalid("cannot sample an empty mesh"));
    }
    if n == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut acc = 0.0;
    for t in 0..mesh.triangles.len() {
        acc += mesh.triangle_area(t);
        cumulative.push(acc);
    }
    let uniform_triangles = acc <= 0.0;
    let rng = CounterRng::new(seed, streams::SURFACE_SAMPLES);
    let out = (0..n as u64)
        .map(|s| {
            let u0 = rng.f64_at(3 * s);
            let t = if uniform_triangles {
                ((u0 * mesh.triangles.len() as f64) as usize).min(mesh.triangles.len() - 1)
            } else {
                let target = u0 * acc;
                cumulative.partition_point(|&c| c <= target).min(mesh.triangles.len() - 1)
            };
            let r1 = rng.f64_at(3 * s + 1).sqrt();
            let r2 = rng.f64_at(3 * s + 2);
            let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
            let [a, b, c] = mesh.corners(t);
            [
                wa * a[0] + wb * b[0] + wc * c[0],
                wa * a[1] + wb * b[1] + wc * c[1],
                wa * a[2] + wb * b[2] + wc * c[2],
            ]
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Dims, GridSpacing};

    #[test]
    fn all_positive_field_gives_empty_mesh() {
        let v = VoxelVolume::create([4, 4, 4], GridSpacing::unit(), 1.0).unwrap();
        let m = marching_cubes(&v, 0.0).unwrap();
        assert!(m.is_empty());
        assert_eq!(connected_components(&m).count, 0);
    }

    #[test]
    fn plane_vertices_are_exact() {
        let d = Dims::cube(8).unwrap();
        let v = VoxelVolume::from_fn(d, GridSpacing::unit(), |p| p[2] - 4.5);
        let m = marching_cubes(&v, 0.0).unwrap();
        assert!(!m.is_empty());
        assert!(m.vertices.iter().all(|p| (p[2] - 4.5).abs() < 1e-9));
        m.validate().unwrap();
        // Normals face +z (toward positive values).
        for t in 0..m.triangles.len() {
            let [a, b, c] = m.corners(t);
            assert!(cross(sub(b, a), sub(c, a))[2] > 0.0);
        }
    }

    #[test]
    fn exact_iso_samples_are_nudged() {
        let d = Dims::cube(4).unwrap();
        let v = VoxelVolume::from_fn(d, GridSpacing::unit(), |p| p[0] - 1.0);
        let m = marching_cubes(&v, 0.0).unwrap();
        m.validate().unwrap();
        assert!(m.vertices.iter().all(|p| (p[0] - 1.0).abs() < 1e-8));
        assert!(m.vertices.iter().all(|p| p[0] > 1.0 - 1e-8));
    }

    #[test]
    fn single_triangle_sampling_stays_inside() {
        let mesh = TriangleMesh {
            vertices: vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            triangles: vec![[0, 1, 2]],
        };
        let pts = surface_samples(&mesh, 500, 3).unwrap();
        for p in pts {
            let (b, c) = (p[0] / 2.0, p[1]);
            let a = 1.0 - b - c;
            assert!(a >= -1e-12 && b >= -1e-12 && c >= -1e-12);
            assert_eq!(p[2], 0.0);
        }
        assert!(surface_samples(&TriangleMesh::default(), 5, 1).is_err());
        assert!(surface_samples(&mesh, 0, 1).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let mesh = TriangleMesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 1.0]],
            triangles: vec![[0, 1, 2], [1, 3, 2]],
        };
        assert_eq!(surface_samples(&mesh, 100, 9).unwrap(), surface_samples(&mesh, 100, 9).unwrap());
        assert_ne!(surface_samples(&mesh, 100, 9).unwrap(), surface_samples(&mesh, 100, 10).unwrap());
    }

    #[test]
    fn validate_rejects_bad_indices() {
        let mesh = TriangleMesh { vertices: vec![[0.0; 3]; 3], triangles: vec![[0, 1, 1]] };
        assert!(mesh.validate().is_err());
        let mesh = TriangleMesh { vertices: vec![[0.0; 3]; 3], triangles: vec![[0, 1, 3]] };
        assert!(mesh.validate().is_err());
    }
}
