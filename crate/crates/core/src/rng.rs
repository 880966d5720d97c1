//! Seed fan-out. Every stage draws from its own ChaCha stream derived from
//! the root seed and a stable label, so adding a stage never shifts the
//! random numbers another stage sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StageRng = ChaCha8Rng;

pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stage_rng(root: u64, label: &str) -> StageRng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label))
}

pub fn seeded(seed: u64) -> StageRng {
    ChaCha8Rng::seed_from_u64(seed)
}
