//! Reductions whose result does not depend on the rayon thread count.
//!
//! Values are summed sequentially in fixed-size leaf blocks, and the block
//! sums are combined by a pairwise tree. The block boundaries depend only on
//! the input length, so any schedule produces the same bits.

use rayon::prelude::*;

const LEAF: usize = 2048;

pub fn deterministic_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let leaves: Vec<f64> = values.par_chunks(LEAF).map(|c| c.iter().sum()).collect();
    pairwise(&leaves)
}

pub fn deterministic_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    deterministic_sum(values) / values.len() as f64
}

fn pairwise(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise(a) + pairwise(b)
        }
    }
}

/// Largest absolute value (order-independent).
pub fn sup_norm(values: &[f64]) -> f64 {
    values.par_iter().map(|v| v.abs()).reduce(|| 0.0, f64::max)
}
