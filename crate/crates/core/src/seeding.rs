//! Seeded random streams and stable hashing.
//!
//! Everything random in the crate flows from a `u64` seed through
//! [`SearchRng`], so runs are reproducible across platforms. Hash-derived
//! values (oracle scores, noise) use a SplitMix64-style mixer whose output is
//! fixed by this file and not by the standard library's hasher.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SearchRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SearchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for an independent sub-stream of `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    StableHasher::new(base).u64(stream).finish()
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
pub struct StableHasher(u64);

impl StableHasher {
    pub fn new(seed: u64) -> Self {
        Self(mix64(seed))
    }

    pub fn u64(self, v: u64) -> Self {
        Self(mix64(self.0 ^ mix64(v)))
    }

    pub fn bytes(self, data: &[u8]) -> Self {
        let mut h = self.u64(data.len() as u64);
        for chunk in data.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            h = h.u64(u64::from_le_bytes(buf));
        }
        h
    }

    pub fn finish(self) -> u64 {
        self.0
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(self) -> f64 {
        (self.0 >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-1, 1)`.
    pub fn symmetric(self) -> f64 {
        2.0 * self.unit() - 1.0
    }

    /// Standard normal via Box-Muller on two derived uniforms.
    pub fn gaussian(self) -> f64 {
        let u1 = 1.0 - self.u64(1).unit();
        let u2 = self.u64(2).unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
