//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator (a
//! counter-based stream cipher). Streams are derived from a root seed and a
//! path of integers, so a clip, an epoch or a sweep point always sees the same
//! numbers regardless of the order or thread in which it is processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finaliser; used only to mix seed paths into a 64-bit key.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for the stream identified by `seed` and `path`.
pub fn stream(seed: u64, path: &[u64]) -> Rng {
    let mut key = mix(seed);
    for &p in path {
        key = mix(key ^ mix(p));
    }
    ChaCha8Rng::seed_from_u64(key)
}

/// Generator seeded directly from `seed`.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable stream labels so call sites do not collide.
pub mod label {
    pub const PARAM_INIT: u64 = 1;
    pub const SYNTH_CLIP: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const TRAIN_STEP: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const NOISE: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const TEACHER: u64 = 8;
    pub const VISUAL: u64 = 9;
}
