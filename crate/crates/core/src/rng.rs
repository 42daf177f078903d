//! Deterministic seeding.
//!
//! Every random stream is derived from one top-level 64-bit seed plus a
//! `(purpose, index)` pair. The derivation mixes the three values with the
//! SplitMix64 finalizer and seeds a ChaCha8 generator, so streams are
//! reproducible across runs and platforms and independent of thread
//! scheduling: a parallel worker that needs randomness asks for its own
//! stream by index instead of sharing a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_str(s: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a child seed for `(purpose, index)` from `seed`.
pub fn derive_seed(seed: u64, purpose: &str, index: u64) -> u64 {
    splitmix(splitmix(seed ^ hash_str(purpose)).wrapping_add(splitmix(index)))
}

/// A generator for the stream `(purpose, index)` under `seed`.
pub fn stream(seed: u64, purpose: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, purpose, index))
}
