//! Counter-based random streams, one per Monte Carlo replica.
//!
//! Replica `r` of a run with master seed `s` owns a xoshiro256++ generator.
//! Its state is fully determined by `(s, r)`:
//!
//! ```text
//! mix64(z):   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9   (wrapping)
//!             z = (z ^ (z >> 27)) * 0x94D049BB133111EB   (wrapping)
//!             return z ^ (z >> 31)
//!
//! stream_seed(s, r) = mix64(s ^ mix64(r + 0x9E3779B97F4A7C15))
//!
//! state word i (i = 1..4) = mix64(stream_seed + i * 0x9E3779B97F4A7C15)
//! ```
//!
//! The four words are handed to xoshiro256++ as little-endian bytes. Uniform
//! doubles in `[0, 1)` are `(next_u64() >> 11) * 2^-53`. Nothing here depends
//! on the thread that runs the replica.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Domain tag xor-ed into the master seed for the correlation-sum runs, so
/// their replicas never share a stream with the stationary run.
pub const CORRELATION_DOMAIN: u64 = 0xC0AA_E1A7_10D5_0001;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(master_seed: u64, replica: u64) -> u64 {
    mix64(master_seed ^ mix64(replica.wrapping_add(GOLDEN_GAMMA)))
}

/// Generator for one replica.
#[derive(Clone, Debug)]
pub struct ReplicaRng {
    inner: Xoshiro256PlusPlus,
}

impl ReplicaRng {
    pub fn new(master_seed: u64, replica: u64) -> Self {
        let base = stream_seed(master_seed, replica);
        let mut seed = [0u8; 32];
        for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
            let word = mix64(base.wrapping_add(GOLDEN_GAMMA.wrapping_mul(i as u64 + 1)));
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        Self {
            inner: Xoshiro256PlusPlus::from_seed(seed),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform double in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for ReplicaRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
