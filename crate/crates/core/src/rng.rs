//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 (a counter-based generator). A run seed is
//! split into per-stage seeds with splitmix64, and per-label work draws from its
//! own ChaCha stream so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for a named stage of a run.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    tag.bytes()
        .fold(mix64(seed), |acc, b| mix64(acc ^ u64::from(b)))
}

pub fn rng(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream` of the generator seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}
