//! Seeded, counter-based random streams.
//!
//! Every stochastic quantity is drawn from a ChaCha8 stream whose key is
//! derived from a root seed and a tuple of stream coordinates (step, chunk,
//! ...). A run therefore produces the same numbers regardless of how work is
//! split between threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a root seed with stream coordinates into a new 64-bit seed.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// A fresh stream for `(seed, parts...)`.
pub fn stream(seed: u64, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, parts))
}
