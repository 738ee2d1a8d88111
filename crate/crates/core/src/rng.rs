//! Seed derivation. Every random stream in the simulator is a ChaCha8 generator
//! keyed by a base seed and a path of tags, so streams never alias across modules,
//! rounds or clients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub mod tag {
    pub const DATASET: u64 = 0x0d47;
    pub const SPLIT: u64 = 0x5b17;
    pub const PARTITION: u64 = 0x9a27;
    pub const KMEANS: u64 = 0x63a5;
    pub const UTILIZATION: u64 = 0x071c;
    pub const MODEL_INIT: u64 = 0x1417;
    pub const SELECTION: u64 = 0x5e1e;
    pub const ROUND: u64 = 0x0b0d;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `tags` into `seed`. Order matters.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(seed: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, tags))
}
