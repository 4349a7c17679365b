//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a single
//! user seed and a stream id. The id is a mix of a domain tag (one constant per
//! consumer, listed below) and up to two indices such as episode number,
//! iteration or particle index. Streams for different `(tag, i, j)` triples are
//! independent, so work can be split across threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_ENV: u64 = 0x01;
pub const TAG_EXPLORE: u64 = 0x02;
pub const TAG_SPLIT: u64 = 0x03;
pub const TAG_MODEL_INIT: u64 = 0x04;
pub const TAG_MODEL_BATCH: u64 = 0x05;
pub const TAG_BC_INIT: u64 = 0x06;
pub const TAG_BC_BATCH: u64 = 0x07;
pub const TAG_SWARM_INIT: u64 = 0x08;
pub const TAG_SWARM_STEP: u64 = 0x09;
pub const TAG_STARTS: u64 = 0x0a;
pub const TAG_EVAL: u64 = 0x0b;
pub const TAG_STAGE: u64 = 0x0c;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` for the stream `(tag, a, b)`.
pub fn derive(seed: u64, tag: u64, a: u64, b: u64) -> u64 {
    mix(mix(mix(seed ^ mix(tag)) ^ a) ^ b.rotate_left(17))
}

pub fn stream(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag, a, b))
}

/// Seed for a named pipeline stage (`"generate"`, `"models"`, ...).
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let h = stage.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    derive(seed, TAG_STAGE, h, 0)
}
