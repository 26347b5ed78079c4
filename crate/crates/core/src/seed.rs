//! Deterministic random streams.
//!
//! Every stochastic routine takes an explicit generator. Independent streams
//! (per method, per repeat) are derived by hashing the base seed together
//! with a label and an index, so the order in which work is scheduled never
//! changes which numbers a given run sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Generator used throughout the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for the stream identified by `(base, label, index)`.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

pub fn derive_rng(base: u64, label: &str, index: u64) -> SeededRng {
    rng_from_seed(derive_seed(base, label, index))
}
