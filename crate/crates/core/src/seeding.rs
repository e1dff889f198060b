//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by a 64-bit seed mixed from a
//! base seed and integer coordinates (grid cell, repetition, replicate). A
//! stream therefore never depends on which worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of coordinates.
pub fn mix_seed(base: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix64(base), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn stream(base: u64, coords: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(mix_seed(base, coords))
}

/// RNG for permutation replicate `r` of a test keyed by `seed`.
pub fn replicate_rng(seed: u64, r: usize) -> StreamRng {
    stream(seed, &[r as u64])
}
