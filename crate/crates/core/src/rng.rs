//! Counter-based random numbers built on the SplitMix64 finalizer.
//!
//! Every draw is a pure function of `(seed, stream, counter)`:
//!
//! ```text
//! key        = mix64(seed ^ mix64(stream + 0x9E3779B97F4A7C15))
//! u64_at(i)  = mix64(key + (i + 1) * 0x9E3779B97F4A7C15)     (wrapping)
//! f64_at(i)  = (u64_at(i) >> 11) * 2^-53
//! mix64(z)   : z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!              z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!              z ^ (z >> 31)
//! ```
//!
//! so phantoms and sample sets can be regenerated bit-exactly from the seed in
//! any language.

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream identifiers used by this crate.
pub mod streams {
    pub const FLIP: u64 = 1;
    pub const SPECKLE: u64 = 2;
    pub const SURFACE_SAMPLES: u64 = 3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { key: mix64(seed ^ mix64(stream.wrapping_add(GOLDEN_GAMMA))) }
    }

    #[inline]
    pub fn u64_at(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn f64_at(&self, counter: u64) -> f64 {
        (self.u64_at(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `0..n` (n > 0); multiply-shift, negligible bias for small n.
    #[inline]
    pub fn below_at(&self, counter: u64, n: u64) -> u64 {
        ((self.u64_at(counter) as u128 * n as u128) >> 64) as u64
    }

    pub fn sequence(self) -> RngSequence {
        RngSequence { rng: self, counter: 0 }
    }
}

/// Sequential view over a [`CounterRng`].
#[derive(Debug, Clone)]
pub struct RngSequence {
    rng: CounterRng,
    counter: u64,
}

impl RngSequence {
    pub fn next_f64(&mut self) -> f64 {
        let v = self.rng.f64_at(self.counter);
        self.counter += 1;
        v
    }

    pub fn next_below(&mut self, n: u64) -> u64 {
        let v = self.rng.below_at(self.counter, n);
        self.counter += 1;
        v
    }
}
