//! Seeded randomness.
//!
//! Every stochastic component draws from [`WalkRng`], a PCG-XSL-RR 128/64
//! generator (`rand_pcg::Pcg64`) seeded through `SeedableRng::seed_from_u64`.
//! Uniform reals are produced as `(next_u64 >> 11) * 2^-53`, which yields the
//! 2^53 evenly spaced values of `[0, 1)`. Both steps are fully specified, so a
//! trace can be regenerated bit-for-bit by any implementation that follows them.

use rand_core::{Rng, SeedableRng};
use rand_pcg::Pcg64;

pub struct WalkRng(Pcg64);

impl WalkRng {
    pub fn new(seed: u64) -> Self {
        WalkRng(Pcg64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi]` (the upper end is reachable only through rounding).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer on `0..n` by rejection, free of modulo bias.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % n) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle, last index first.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// SplitMix64 finaliser; maps `(master, index)` pairs to well-separated seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
