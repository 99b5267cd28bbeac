//! Reproducible random stream for sampling.
//!
//! The generator is ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), a
//! counter-based cipher whose output is identical on every platform. A 64-bit
//! seed is expanded into the 256-bit key with `rand_core`'s
//! `SeedableRng::seed_from_u64`. Uniform variates take the top 53 bits of
//! one `u64` output: `u = (x >> 11) · 2⁻⁵³ ∈ [0, 1)`.
//!
//! Independent sequences of a sweep get their seed from [`derive_seed`], a
//! SplitMix64 mix of the master seed and the sequence ordinal.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Single-owner uniform stream. Never shared between generation sequences.
#[derive(Debug, Clone)]
pub struct RandomStream {
    inner: ChaCha8Rng,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A stream on one of the 2⁶⁴ independent ChaCha streams of `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Next uniform variate in `[0, 1)`.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n` (`n > 0`), by rejection.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let x = self.inner.next_u64();
            if x <= zone {
                return x % n;
            }
        }
    }
}

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `ordinal`-th sequence derived from `master`.
pub fn derive_seed(master: u64, ordinal: u64) -> u64 {
    mix64(master.wrapping_add(ordinal.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn same_seed_same_sequence() {
        let a: Vec<f64> = {
            let mut r = RandomStream::new(42);
            (0..64).map(|_| r.next_uniform()).collect()
        };
        let mut r = RandomStream::new(42);
        for v in a {
            assert_eq!(v.to_bits(), r.next_uniform().to_bits());
        }
    }

    #[test]
    fn uniforms_in_unit_interval() {
        let mut r = RandomStream::new(7);
        for _ in 0..10_000 {
            let u = r.next_uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn golden_first_outputs() {
        // Frozen: a change here silently invalidates every recorded trace.
        let mut r = RandomStream::new(0);
        assert_eq!(r.next_u64(), 13_080_132_717_333_068_652);
        assert_eq!(r.next_u64(), 8_594_738_769_458_413_623);
        assert_eq!(RandomStream::new(0).next_uniform(), 0.709_075_415_426_561_8);
    }

    #[test]
    fn streams_differ() {
        let mut a = RandomStream::with_stream(1, 0);
        let mut b = RandomStream::with_stream(1, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seeds: Vec<u64> = (0..1000).map(|i| derive_seed(5, i)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }

    #[test]
    fn next_below_in_range() {
        let mut r = RandomStream::new(3);
        for n in [1u64, 2, 3, 16, 1000] {
            for _ in 0..200 {
                assert!(r.next_below(n) < n);
            }
        }
    }
}
