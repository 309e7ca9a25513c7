//! The 256-case marching-cubes lookup table, built from cube topology.
//!
//! Corner `c` sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`. Bit `c` of
//! a case index is set when corner `c` is inside (below the iso value). On
//! faces with four crossings the inside corners are always cut off
//! separately; the rule depends only on the face's corner signs, so the two
//! cubes sharing a face produce matching segments and the surface is closed.
//! Loops are oriented so that triangle normals point toward the outside.

use std::sync::OnceLock;

/// `(corner_a, corner_b, axis)` with `corner_b = corner_a + (1 << axis)`.
pub(crate) const EDGES: [(u8, u8, u8); 12] = build_edges();

const fn build_edges() -> [(u8, u8, u8); 12] {
    let mut out = [(0u8, 0u8, 0u8); 12];
    let mut n = 0;
    let mut axis = 0;
    while axis < 3 {
        let mut c = 0u8;
        while c < 8 {
            if c & (1 << axis) == 0 {
                out[n] = (c, c | (1 << axis), axis as u8);
                n += 1;
            }
            c += 1;
        }
        axis += 1;
    }
    out
}

fn edge_between(a: u8, b: u8) -> usize {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    EDGES.iter().position(|&(x, y, _)| x == lo && y == hi).expect("corners share an edge")
}

/// Corners of each face, counter-clockwise when viewed from outside the cube.
fn faces() -> Vec<[u8; 4]> {
    let mut out = Vec::with_capacity(6);
    for axis in 0..3 {
        let u = (axis + 1) % 3;
        let v = (axis + 2) % 3;
        for side in 0..2u8 {
            let corner = |cu: u8, cv: u8| (side << axis) | (cu << u) | (cv << v);
            let mut ring = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
            if side == 0 {
                ring.reverse();
            }
            out.push(ring);
        }
    }
    out
}

fn share_face(a: u8, b: u8) -> bool {
    let (a0, a1, _) = EDGES[a as usize];
    let (b0, b1, _) = EDGES[b as usize];
    // All four corners on one face: some coordinate bit agrees across them.
    (0..3).any(|axis| {
        let bit = |c: u8| (c >> axis) & 1;
        bit(a0) == bit(a1) && bit(a1) == bit(b0) && bit(b0) == bit(b1)
    })
}

/// Splits a contour into triangles using only diagonals that cross the cube
/// interior. A diagonal lying in a face would duplicate an edge of the
/// neighbouring cube's contour.
fn triangulate(ring: &[u8], out: &mut Vec<[u8; 3]>) {
    fn go(ring: &[u8], out: &mut Vec<[u8; 3]>) -> bool {
        let n = ring.len();
        if n == 3 {
            out.push([ring[0], ring[1], ring[2]]);
            return true;
        }
        for a in 0..n {
            for b in a + 2..n {
                if (a == 0 && b == n - 1) || share_face(ring[a], ring[b]) {
                    continue;
                }
                let mark = out.len();
                let left: Vec<u8> = ring[a..=b].to_vec();
                let right: Vec<u8> = ring[b..].iter().chain(&ring[..=a]).copied().collect();
                if go(&left, out) && go(&right, out) {
                    return true;
                }
                out.truncate(mark);
            }
        }
        false
    }
    assert!(go(ring, out), "contour {ring:?} has no interior triangulation");
}

pub(crate) struct CaseTable {
    pub edge_mask: [u16; 256],
    pub triangles: Vec<Vec<[u8; 3]>>,
}

pub(crate) fn table() -> &'static CaseTable {
    static TABLE: OnceLock<CaseTable> = OnceLock::new();
    TABLE.get_or_init(build)
}

fn build() -> CaseTable {
    let faces = faces();
    let mut edge_mask = [0u16; 256];
    let mut triangles = Vec::with_capacity(256);
    for case in 0..256usize {
        let inside = |c: u8| case & (1 << c) != 0;
        for (e, &(a, b, _)) in EDGES.iter().enumerate() {
            if inside(a) != inside(b) {
                edge_mask[case] |= 1 << e;
            }
        }
        // succ[e] = next crossing edge along the oriented contour.
        let mut succ = [u8::MAX; 12];
        for ring in &faces {
            let crossing = |k: usize| (ring[k % 4], ring[(k + 1) % 4]);
            for k in 0..4 {
                let (p, q) = crossing(k);
                // Entry edges go outside -> inside along the ring.
                if inside(p) || !inside(q) {
                    continue;
                }
                // Pair with the following exit edge; this cuts off the inside
                // corner(s) between them.
                for step in 1..4 {
                    let (p2, q2) = crossing(k + step);
                    if inside(p2) && !inside(q2) {
                        succ[edge_between(p, q)] = edge_between(p2, q2) as u8;
                        break;
                    }
                }
            }
        }
        let mut tris = Vec::new();
        let mut seen = [false; 12];
        for start in 0..12 {
            if succ[start] == u8::MAX || seen[start] {
                continue;
            }
            let mut ring = Vec::new();
            let mut e = start;
            while !seen[e] {
                seen[e] = true;
                ring.push(e as u8);
                e = succ[e] as usize;
            }
            debug_assert_eq!(e, start);
            triangulate(&ring, &mut tris);
        }
        triangles.push(tris);
    }
    CaseTable { edge_mask, triangles }
}
