//! Seed derivation.
//!
//! Every random stream is derived from one root seed as
//! `splitmix64(root ^ splitmix64(stream))`, and each stream drives its own
//! ChaCha8 generator. A stage can therefore be reproduced in isolation from
//! `(root, stream)` alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Stream tags. Shuffle streams add the epoch index to `SHUFFLE`.
pub mod stream {
    pub const POSITION_BASE: u64 = 1;
    pub const ROLE_PHI0: u64 = 2;
    pub const ROLE_PHI1: u64 = 3;
    pub const ROLE_PHI2: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const SYNTH_EDGES: u64 = 6;
    pub const SYNTH_NODES: u64 = 7;
    pub const SHUFFLE: u64 = 1 << 32;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(root: u64, stream: u64) -> u64 {
    splitmix64(root ^ splitmix64(stream))
}

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(root: u64, stream: u64) -> SeededRng {
    rng(derive(root, stream))
}
