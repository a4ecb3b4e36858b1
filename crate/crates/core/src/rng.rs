//! Seeded random streams.
//!
//! Every independent piece of randomness (a noise block, a batch of walkers,
//! a Monte Carlo sample) draws from its own ChaCha stream keyed by
//! `(master seed, tag, index)`, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a tag and an index into a 64-bit key.
pub fn mix(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ tag.rotate_left(17)) ^ index)
}

pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tag, index))
}

/// Stream tags used across the crate.
pub mod tags {
    pub const CONDUCTANCE: u64 = 1;
    pub const SPEED: u64 = 2;
    pub const BLOB_POINTS: u64 = 3;
    pub const GRID_OFFSET: u64 = 4;
    pub const WALKERS: u64 = 5;
    pub const MOMENTS: u64 = 6;
    pub const BOOTSTRAP: u64 = 7;
    pub const ROSENTHAL: u64 = 8;
    pub const TRIALS: u64 = 9;
    pub const CHAIN: u64 = 10;
    pub const SIGMA: u64 = 11;
}
