//! Counter-based random streams.
//!
//! Every sampler takes an explicit [`Stream`]. Streams are ChaCha20 keyed by a
//! 64-bit seed with a 64-bit stream index, so `(seed, index)` pairs address
//! independent sequences without any shared state between threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Stream = ChaCha20Rng;

pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer, used to derive child seeds from a parent seed.
pub fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(parent: u64, child: u64) -> u64 {
    mix(parent ^ mix(child))
}
