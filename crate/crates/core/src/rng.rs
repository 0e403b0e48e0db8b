//! Deterministic random streams.
//!
//! Every stochastic item (a document, a prompt, a script) gets its own
//! ChaCha stream seeded from `(master seed, stream tag, item index)`, so
//! results never depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of item `index` in the stream named `tag`.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix64(master);
    for b in tag.bytes() {
        h = mix64(h ^ u64::from(b));
    }
    mix64(h ^ mix64(index))
}

pub fn rng_from_seed(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(master: u64, tag: &str, index: u64) -> StreamRng {
    rng_from_seed(derive_seed(master, tag, index))
}
