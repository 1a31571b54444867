//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! 64-bit value obtained by folding a master seed with a list of integer
//! tags through the SplitMix64 finalizer:
//!
//! ```text
//! h = mix(master)
//! for tag in tags: h = mix(h ^ mix(tag + GOLDEN))
//! ```
//!
//! where `mix` is the SplitMix64 output function and `GOLDEN` is
//! `0x9E3779B97F4A7C15`. Stage tags are fixed constants in [`stage`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Fixed tags separating the random streams of the pipeline stages.
pub mod stage {
    pub const SAMPLE: u64 = 1;
    pub const INFER: u64 = 2;
    pub const EMBED: u64 = 3;
    pub const EVALUATE: u64 = 4;
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(mix(master), |h, &t| mix(h ^ mix(t.wrapping_add(GOLDEN))))
}

pub fn stream(master: u64, tags: &[u64]) -> Stream {
    Stream::seed_from_u64(derive_seed(master, tags))
}

/// Seed for one pipeline stage, derived from the master seed.
pub fn stage_seed(master: u64, stage: u64) -> u64 {
    derive_seed(master, &[stage])
}
