//! Deterministic seed derivation.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] whose seed is
//! derived by hashing a master seed together with a purpose tag, so
//! independent stages (data generation, anchor, row splits, repetitions)
//! consume independent streams and results do not depend on scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// RNG for `tag` under `master_seed`. Same inputs, same stream, any platform.
pub fn rng_for(master_seed: u64, tag: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// A sub-seed for `tag`, for configs that carry a plain `u64` seed.
pub fn seed_for(master_seed: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Seed for repetition `rep` of an experiment.
pub fn rep_seed(master_seed: u64, rep: usize) -> u64 {
    seed_for(master_seed, &format!("rep/{rep}"))
}
