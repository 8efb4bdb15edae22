//! Seed splitting.
//!
//! Every random decision in a run descends from one root seed. A sub-seed
//! is the first eight bytes (little endian) of
//! `SHA-256(root.to_le_bytes() || stream)`, where `stream` is a short
//! slash-separated label such as `"clustering"`, `"undersample"`,
//! `"solver-init/3"` or `"folds"`. Sub-seeds only depend on the root and
//! their own label, so adding a new stream never shifts an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(root: u64, stream: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(stream.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
