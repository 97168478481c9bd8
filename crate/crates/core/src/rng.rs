//! Seeded random streams.
//!
//! Every stochastic call in the engine takes an explicit generator. Sessions
//! draw from [`SimRng`] (ChaCha8, portable and bit-stable across platforms),
//! with separate streams for planning and for trials so that changing the
//! plan policy does not perturb trial draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream used for condition ordering.
pub const PLAN_STREAM: u64 = 0;
/// Stream used for everything that happens during trials.
pub const TRIAL_STREAM: u64 = 1;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replicate `index` of a batch started from `base_seed`:
/// `splitmix64(base_seed + index * 0x9E3779B97F4A7C15)` with wrapping
/// arithmetic.
pub fn replicate_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed.wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)))
}

/// Generator for `seed` positioned on the given stream.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
