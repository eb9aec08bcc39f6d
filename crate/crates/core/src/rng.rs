//! Seeded random streams. Every stochastic draw in the crate goes through a
//! ChaCha8 generator so results are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent seed for `(stream, index)` from a base seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(stream)) ^ index)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named streams so independent consumers of one user seed never collide.
pub mod stream {
    pub const CORRUPTION: u64 = 1;
    pub const MODEL_INIT: u64 = 2;
    pub const PROMPT_INIT: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const SWEEP: u64 = 5;
    pub const GRADCHECK: u64 = 6;
    pub const HEAD_INIT: u64 = 7;
}
