//! Seed plumbing. Every random draw in the crate comes from a [`ChaCha8Rng`]
//! whose seed is derived from an explicit master seed, so results never depend
//! on scheduling or iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xxhash_rust::xxh64::xxh64;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a numeric stream id.
pub fn derive(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// Derive a child seed from a parent seed and a string key (e.g. a user id).
pub fn derive_str(seed: u64, key: &str) -> u64 {
    splitmix64(seed ^ xxh64(key.as_bytes(), 0))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(seed: u64, stream: u64) -> Rng {
    rng(derive(seed, stream))
}
