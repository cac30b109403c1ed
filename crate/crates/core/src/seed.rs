//! Named sub-seed derivation and the crate-wide RNG type.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Stable sub-seed for `name` under `seed`; adding a new name never changes
/// the seeds handed out for existing ones.
pub fn derive(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn named_rng(seed: u64, name: &str) -> Rng {
    rng(derive(seed, name))
}
