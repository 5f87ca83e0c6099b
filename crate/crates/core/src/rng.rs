//! Deterministic random streams.
//!
//! Every replication gets its own ChaCha8 stream whose seed is a SplitMix64
//! avalanche of `(base_seed, index)`. Streams never depend on how many workers
//! ran before them, so a batch reproduces bit-for-bit at any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `index` of `base_seed`: `splitmix64(base ^ splitmix64(index))`.
pub fn split_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index))
}

/// Stream for sub-stream `index` of `base_seed`.
pub fn split(base_seed: u64, index: u64) -> Stream {
    Stream::seed_from_u64(split_seed(base_seed, index))
}

/// Stream seeded directly from a 64-bit seed.
pub fn stream(seed: u64) -> Stream {
    Stream::seed_from_u64(seed)
}
