//! Seed plumbing. Every random draw in the crate comes from a ChaCha8
//! stream whose seed is derived from a master seed by [`mix`], so adding a
//! consumer never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags for derived streams.
pub mod stream {
    pub const GRAPH: u64 = 1;
    pub const OBSERVED: u64 = 2;
    pub const COVARIANCE: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const INTERVENTION: u64 = 5;
    pub const CLASSIFIER: u64 = 6;
    pub const TRAINING: u64 = 7;
    pub const TRIAL: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(seed, index)`.
pub fn mix(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(seed: u64, purpose: u64) -> Rng {
    rng(mix(seed, purpose))
}
