//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream derived
//! from a master seed and a short path of stream labels, e.g.
//! `(seed, [REPLICATE, r, FOLD, k])`. No thread-local or global generator is used.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream label constants for the different consumers of randomness.
pub mod label {
    pub const COEFFICIENTS: u64 = 1;
    pub const DESIGN: u64 = 2;
    pub const SURVIVAL: u64 = 3;
    pub const ELBO: u64 = 4;
    pub const FOLDS: u64 = 5;
    pub const CELL: u64 = 6;
    pub const CHAIN: u64 = 7;
    pub const RISK: u64 = 8;
    pub const REPLICATE: u64 = 9;
    pub const INIT: u64 = 10;
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Generator seeded by `seed` and positioned on the stream named by `path`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let id = path.iter().fold(0x5EED_u64, |acc, &p| splitmix(acc ^ splitmix(p)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Derive a child seed, for APIs that take a plain `u64`.
pub fn child_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}
