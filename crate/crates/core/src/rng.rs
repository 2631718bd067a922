//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a generator addressed by
//! `(seed, stream, index)`. The ChaCha keystream is positioned directly at the
//! block reserved for `index`, so a sample's randomness never depends on how
//! many other samples were drawn before it or on which thread drew them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words of keystream reserved per sample index.
const WORDS_PER_INDEX: u128 = 1 << 32;

/// Named streams so unrelated consumers of one seed never share randomness.
pub mod streams {
    pub const BALL: u64 = 1;
    pub const CAP: u64 = 2;
    pub const PROJECT: u64 = 3;
    pub const MC: u64 = 4;
    pub const VARIETY: u64 = 5;
    pub const ROTATION: u64 = 6;
    pub const RIDGE: u64 = 7;
    pub const PROBE: u64 = 8;
    pub const CURVATURE: u64 = 9;
    pub const FIBER: u64 = 10;
    pub const DEFORM: u64 = 11;
}

/// Generator for sample `index` of `stream` under `seed`.
pub fn rng_for(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(index as u128 * WORDS_PER_INDEX);
    rng
}

/// Derives a child seed, used to give each row of an experiment its own
/// independent seed space.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
