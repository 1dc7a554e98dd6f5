//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a 64-bit
//! seed obtained by folding a path of integers (master seed, row, trial, ...)
//! through the SplitMix64 finalizer. Trials therefore get the same stream no
//! matter which worker thread runs them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into `master`, one component at a time.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(master.wrapping_add(GOLDEN)), |acc, &p| {
        mix(acc ^ mix(p.wrapping_add(GOLDEN)))
    })
}

pub fn rng_for(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, path))
}
