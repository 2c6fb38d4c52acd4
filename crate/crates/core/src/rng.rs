//! Reproducible random streams keyed by `(seed, label, trial)`.
//!
//! Each stream is a ChaCha20 generator whose 256-bit key is the SHA-256 digest
//! of the triple, so a stream depends only on its key and never on the order
//! in which other streams were created.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Random stream handed to the samplers. Single owner; never shared across threads.
pub type Stream = ChaCha20Rng;

const DOMAIN: &[u8] = b"sparse-bbp/stream/v1";

pub fn derive_stream(seed: u64, label: &str, trial: u64) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(DOMAIN);
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(trial.to_le_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha20Rng::from_seed(key)
}
