//! Content digests used for checkpoints, plan identity and seed derivation.

use sha2::{Digest, Sha256};

/// Lowercase hex of the SHA-256 digest of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Derives a per-node seed from the root seed and the node index, so that
/// inserting a node never perturbs the draws of nodes at other indices.
pub fn node_seed(root_seed: u64, node_index: usize) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(root_seed.to_le_bytes());
    hasher.update((node_index as u64).to_le_bytes());
    hasher.finalize().into()
}
