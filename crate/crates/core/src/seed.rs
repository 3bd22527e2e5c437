//! Counter-based seed splitting.
//!
//! Every replication of a Monte Carlo study owns an independent generator
//! whose seed is a pure function of `(master, index)`. Replications can then
//! run in any order and on any number of threads while drawing identical
//! streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tag for per-replication analysis samples.
pub const STREAM_REPLICATION: u64 = 0x5245_504c_4943_4154;
/// Stream tag for prediction-rule training samples.
pub const STREAM_TRAINING: u64 = 0x5452_4149_4e49_4e47;
/// Stream tag for bootstrap resamples.
pub const STREAM_BOOTSTRAP: u64 = 0x424f_4f54_5354_5250;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of `(master, stream, index)`.
pub fn split_stream(master: u64, stream: u64, index: u64) -> u64 {
    let a = mix64(master.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let b = mix64(a ^ stream);
    mix64(b.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Seed for replication `index` of a study seeded with `master`.
pub fn split(master: u64, index: u64) -> u64 {
    split_stream(master, STREAM_REPLICATION, index)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
