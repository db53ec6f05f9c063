//! Deterministic RNG streams.
//!
//! Every consumer of randomness derives its own ChaCha8 stream from
//! (master seed, stream index, purpose tag) via SHA-256, so adding or
//! reordering one consumer (say, dataset regeneration) never perturbs the
//! randomness seen by another (say, episode sampling).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive an independent, reproducible RNG stream.
pub fn derive_stream(master_seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(index.to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
