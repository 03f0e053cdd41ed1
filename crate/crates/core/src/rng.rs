//! Seed derivation for common random numbers.
//!
//! Every random stream is keyed by a path of integers (trial, participant,
//! decision point, purpose) hashed together with the base seed, so the draws a
//! participant sees do not depend on which algorithm is running, on iteration
//! order, or on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

/// Uniform in `[0, 1)` from a derived seed, without constructing a generator.
pub fn uniform(base: u64, path: &[u64]) -> f64 {
    (derive_seed(base, path) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stream purposes.
pub mod purpose {
    pub const ENV: u64 = 1;
    pub const APP: u64 = 2;
    pub const ACTION: u64 = 3;
    pub const OUTCOME: u64 = 4;
    pub const POSTERIOR: u64 = 5;
    pub const FIT: u64 = 6;
    pub const VERIFY: u64 = 7;
}
