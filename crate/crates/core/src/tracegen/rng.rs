//! Seeded random streams for trace generation.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood), reals take the top 53
//! bits of a draw scaled by 2^-53, and bounded integers use rejection
//! sampling on the full 64-bit draw. All three are simple enough to port
//! verbatim, so streams are reproducible across languages and platforms.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

#[derive(Debug, Clone)]
pub struct TraceRng(SplitMix64);

impl TraceRng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform real in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`; `bound` must be non-zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % bound;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

fn mix(x: u64) -> u64 {
    TraceRng::new(x).next_u64()
}

/// FNV-1a over the split name, folded with the master seed and index
/// through SplitMix64 finalisation.
pub fn derive_seed(master: u64, split: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in split.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(mix(master ^ h) ^ mix(index))
}
