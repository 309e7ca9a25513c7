mod common;

use std::f64::consts::PI;

use common::{rng, uniform};
use proptest::prelude::*;
use vesselfield::mesher::{connected_components, marching_cubes};
use vesselfield::phantom::{degrade, tree_mask, tree_sdf, CenterlineTree, DegradeSpec, PhantomSpec};
use vesselfield::rng::RngSequence;
use vesselfield::{Dims, GridSpacing};

fn random_tree(r: &mut RngSequence, dims: Dims, s: GridSpacing, nodes: usize) -> CenterlineTree {
    let ext = [(dims.nx - 1) as f64 * s.dx(), (dims.ny - 1) as f64 * s.dy(), (dims.nz - 1) as f64 * s.dz()];
    let pts: Vec<[f64; 3]> =
        (0..nodes).map(|_| [uniform(r, 0.0, ext[0]), uniform(r, 0.0, ext[1]), uniform(r, 0.0, ext[2])]).collect();
    let radii = (0..nodes).map(|_| uniform(r, 0.8, 3.0)).collect();
    let edges = (1..nodes).map(|i| [r.next_below(i as u64) as usize, i]).collect();
    CenterlineTree { nodes: pts, radii, edges }
}

/// Point-in-capsule membership without going through the distance field.
fn inside_any_capsule(t: &CenterlineTree, p: [f64; 3]) -> bool {
    t.edges.iter().any(|&[a, b]| {
        let (pa, pb) = (t.nodes[a], t.nodes[b]);
        let ab: Vec<f64> = (0..3).map(|i| pb[i] - pa[i]).collect();
        let ap: Vec<f64> = (0..3).map(|i| p[i] - pa[i]).collect();
        let len2: f64 = ab.iter().map(|v| v * v).sum();
        let tt = if len2 > 0.0 { (ap.iter().zip(&ab).map(|(x, y)| x * y).sum::<f64>() / len2).clamp(0.0, 1.0) } else { 0.0 };
        let d2: f64 = (0..3).map(|i| (p[i] - (pa[i] + tt * ab[i])).powi(2)).sum();
        let rad = t.radii[a] + tt * (t.radii[b] - t.radii[a]);
        d2 < rad * rad
    })
}

#[test]
fn sign_matches_capsule_membership() {
    let mut r = rng(21);
    for trial in 0..10 {
        let d = Dims::new(14, 12, 10).unwrap();
        let s = if trial % 2 == 0 { GridSpacing::unit() } else { GridSpacing::new(0.7, 0.7, 1.6).unwrap() };
        let t = random_tree(&mut r, d, s, 2 + trial % 4);
        let f = tree_sdf(&t, d, s).unwrap();
        let m = tree_mask(&t, d, s).unwrap();
        for idx in 0..d.len() {
            let [i, j, k] = d.coords(idx);
            let p = [i as f64 * s.dx(), j as f64 * s.dy(), k as f64 * s.dz()];
            let v = f.data()[idx];
            if v.abs() < 1e-9 {
                continue;
            }
            assert_eq!(v < 0.0, inside_any_capsule(&t, p), "trial {trial} voxel {idx} value {v}");
            assert_eq!(m.is_set(idx), v < 0.0);
        }
    }
}

#[test]
fn tube_volume_matches_cylinder() {
    let d = Dims::new(32, 32, 40).unwrap();
    for r in [4.0, 6.5] {
        let t = CenterlineTree {
            nodes: vec![[15.5, 15.2, 0.0], [15.5, 15.2, 39.0]],
            radii: vec![r, r],
            edges: vec![[0, 1]],
        };
        let m = tree_mask(&t, d, GridSpacing::unit()).unwrap();
        // Slices z = 0..39 sample the segment; the hemispherical caps fall outside.
        let expect = PI * r * r * 40.0;
        let got = m.count() as f64;
        assert!((got / expect - 1.0).abs() <= 0.05, "r {r}: {got} vs {expect}");
    }
}

#[test]
fn lipschitz_on_sampled_pairs() {
    let mut r = rng(22);
    let d = Dims::new(20, 18, 16).unwrap();
    let s = GridSpacing::new(0.8, 0.8, 1.5).unwrap();
    for _ in 0..6 {
        // Mild tapers: |dr| stays well below 0.2 of any segment long enough to matter.
        let mut t = random_tree(&mut r, d, s, 4);
        for e in 0..t.edges.len() {
            let [a, b] = t.edges[e];
            let len = (0..3).map(|i| (t.nodes[a][i] - t.nodes[b][i]).powi(2)).sum::<f64>().sqrt();
            let cap = 0.2 * len;
            if (t.radii[b] - t.radii[a]).abs() > cap {
                t.radii[b] = t.radii[a] + cap.copysign(t.radii[b] - t.radii[a]);
            }
        }
        if t.radii.iter().any(|&x| x <= 0.0) {
            continue;
        }
        let f = tree_sdf(&t, d, s).unwrap();
        for _ in 0..2000 {
            let a = r.next_below(d.len() as u64) as usize;
            let b = r.next_below(d.len() as u64) as usize;
            let (pa, pb) = (f.index_to_world(d.coords(a)).unwrap(), f.index_to_world(d.coords(b)).unwrap());
            let dist = (0..3).map(|i| (pa[i] - pb[i]).powi(2)).sum::<f64>().sqrt();
            let diff = (f.data()[a] - f.data()[b]).abs();
            assert!(diff <= dist + 0.1 * s.dx(), "{diff} > {dist}");
        }
    }
}

#[test]
fn far_region_is_empty() {
    let d = Dims::cube(24).unwrap();
    let t = CenterlineTree { nodes: vec![[4.0, 4.0, 0.0], [4.0, 4.0, 23.0]], radii: vec![2.0, 2.0], edges: vec![[0, 1]] };
    let m = tree_mask(&t, d, GridSpacing::unit()).unwrap();
    for idx in 0..d.len() {
        let [i, j, _] = d.coords(idx);
        if i >= 8 || j >= 8 {
            assert!(!m.is_set(idx));
        }
    }
}

#[test]
fn rejects_trees_outside_the_grid() {
    let d = Dims::cube(8).unwrap();
    let t = CenterlineTree { nodes: vec![[1.0, 1.0, 1.0], [1.0, 1.0, 9.0]], radii: vec![1.0, 1.0], edges: vec![[0, 1]] };
    assert!(tree_sdf(&t, d, GridSpacing::unit()).is_err());
    assert!(tree_sdf(&t, d, GridSpacing::new(1.0, 1.0, 2.0).unwrap()).is_ok());
}

#[test]
fn flip_count_within_binomial_bound() {
    let d = Dims::cube(64).unwrap();
    let t = CenterlineTree { nodes: vec![[32.0, 32.0, 0.0], [32.0, 32.0, 63.0]], radii: vec![8.0, 8.0], edges: vec![[0, 1]] };
    let m = tree_mask(&t, d, GridSpacing::unit()).unwrap();
    let p = 0.05;
    for k in [1usize, 2] {
        let spec = DegradeSpec { keep_every_k_slices: k, flip_probability: p, speckle_count: 0, speckle_radius: 0.0, seed: 3 };
        let y = degrade(&m, &spec).unwrap();
        let slab = 64 * 64;
        let mut kept = 0usize;
        let mut flips = 0usize;
        for idx in 0..d.len() {
            if (idx / slab) % k != 0 {
                assert_eq!(y.data()[idx], 0.0);
                continue;
            }
            kept += 1;
            if (y.data()[idx] >= 0.5) != m.is_set(idx) {
                flips += 1;
            }
        }
        let mean = p * kept as f64;
        let sd = (kept as f64 * p * (1.0 - p)).sqrt();
        assert!((flips as f64 - mean).abs() <= 3.0 * sd, "{flips} vs {mean} ± {sd}");
    }
}

#[test]
fn speckles_land_on_kept_slices() {
    let d = Dims::new(32, 32, 12).unwrap();
    let m = vesselfield::BinaryMask::empty(d, GridSpacing::unit());
    let spec = DegradeSpec { keep_every_k_slices: 3, flip_probability: 0.0, speckle_count: 15, speckle_radius: 2.0, seed: 5 };
    let y = degrade(&m, &spec).unwrap();
    let on: Vec<usize> = (0..d.len()).filter(|&i| y.data()[i] == 1.0).collect();
    assert!(!on.is_empty());
    assert!(on.iter().all(|&i| d.coords(i)[2].is_multiple_of(3)));
    // A radius-2 ball intersected with one slice has at most 13 voxels.
    assert!(on.len() <= 15 * 13);
}

#[test]
fn degrade_is_reproducible() {
    let spec = PhantomSpec::preset("tube64").unwrap();
    let a = spec.generate().unwrap();
    let b = spec.generate().unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a.degraded.data()), bits(b.degraded.data()));
    assert_eq!(bits(a.sdf.data()), bits(b.sdf.data()));
    let mut other = spec.clone();
    other.degrade.seed = 8;
    assert_ne!(bits(other.generate().unwrap().degraded.data()), bits(a.degraded.data()));
}

/// 4-connected foreground regions on each of the six grid faces.
fn face_regions(m: &vesselfield::BinaryMask) -> usize {
    let d = m.dims();
    let n = d.as_array();
    let mut total = 0;
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, n[axis] - 1] {
            let at = |a: usize, b: usize| {
                let mut c = [0; 3];
                c[axis] = side;
                c[u] = a;
                c[v] = b;
                m.is_set(d.index(c[0], c[1], c[2]))
            };
            let mut seen = vec![false; n[u] * n[v]];
            for a0 in 0..n[u] {
                for b0 in 0..n[v] {
                    if seen[a0 + n[u] * b0] || !at(a0, b0) {
                        continue;
                    }
                    total += 1;
                    let mut stack = vec![(a0, b0)];
                    seen[a0 + n[u] * b0] = true;
                    while let Some((a, b)) = stack.pop() {
                        let nb = [(a.wrapping_sub(1), b), (a + 1, b), (a, b.wrapping_sub(1)), (a, b + 1)];
                        for (x, y) in nb {
                            if x < n[u] && y < n[v] && !seen[x + n[u] * y] && at(x, y) {
                                seen[x + n[u] * y] = true;
                                stack.push((x, y));
                            }
                        }
                    }
                }
            }
        }
    }
    total
}

#[test]
fn ybranch_has_three_open_ends() {
    let ph = PhantomSpec::preset("ybranch96").unwrap().generate().unwrap();
    assert_eq!(face_regions(&ph.mask), 3);
    assert_eq!(face_regions(&PhantomSpec::preset("tube64").unwrap().generate().unwrap().mask), 2);
    let mesh = marching_cubes(&ph.sdf, 0.0).unwrap();
    assert_eq!(connected_components(&mesh).count, 1);
}

#[test]
fn presets_load_and_validate() {
    for name in vesselfield::phantom::PRESETS {
        let spec = PhantomSpec::preset(name).unwrap();
        spec.validate().unwrap();
        let back: PhantomSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
    assert!(PhantomSpec::preset("nope").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn identity_degrade_is_noop(seed in 0u64..10_000, density in 0.0f64..1.0) {
        let mut r = rng(seed);
        let d = Dims::new(6, 5, 4).unwrap();
        let m = common::random_mask(&mut r, d, GridSpacing::unit(), density);
        let y = degrade(&m, &DegradeSpec { seed, ..DegradeSpec::identity() }).unwrap();
        for i in 0..d.len() {
            prop_assert_eq!(y.data()[i] == 1.0, m.is_set(i));
        }
    }

    #[test]
    fn only_every_kth_slice_has_foreground(k in 1usize..6, nz in 1usize..14, seed in 0u64..100) {
        let d = Dims::new(5, 5, nz).unwrap();
        let m = vesselfield::BinaryMask::from_fn(d, GridSpacing::unit(), |_| true);
        let spec = DegradeSpec { keep_every_k_slices: k, flip_probability: 0.1, speckle_count: 3, speckle_radius: 1.0, seed };
        let y = degrade(&m, &spec).unwrap();
        let slices = (0..nz).filter(|&z| (0..25).any(|i| y.data()[i + 25 * z] > 0.0)).count();
        prop_assert!(slices <= nz.div_ceil(k));
        for z in 0..nz {
            if z % k != 0 {
                prop_assert!((0..25).all(|i| y.data()[i + 25 * z] == 0.0));
            }
        }
    }
}
