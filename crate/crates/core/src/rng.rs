//! Seeded, splittable random streams.
//!
//! Every stochastic routine takes an explicit `&mut Rng`. Parallel work never
//! shares a generator; instead each task derives its own stream from a parent
//! seed and a list of stream coordinates (grid index, trial, column, pass).

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Creates a generator from a 64-bit seed.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a path of stream coordinates.
///
/// The derivation is a fixed function of its inputs, so the seed assigned to
/// a task does not depend on scheduling or on how many threads are used.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(base), |acc, &p| mix64(acc ^ mix64(p.wrapping_add(0x5851_f42d_4c95_7f2d))))
}

/// Derives a child generator; see [`derive_seed`].
pub fn derive(base: u64, path: &[u64]) -> Rng {
    seeded(derive_seed(base, path))
}

/// Draws a fresh base seed from `rng`, consuming one 64-bit output.
pub fn split(rng: &mut Rng) -> u64 {
    rng.next_u64()
}
