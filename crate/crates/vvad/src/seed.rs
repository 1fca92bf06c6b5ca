//! Deterministic RNG fan-out.
//!
//! Every random choice in the crate draws from a stream derived from one
//! root seed, a textual label, and an index. Derivation goes through SHA-256
//! so streams for different labels or indices are statistically independent
//! and insensitive to call order, which keeps parallel per-clip work
//! reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from a root seed, a stream label, and an index.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update([0x1f]);
    h.update(label.as_bytes());
    h.update([0x1f]);
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("SHA-256 digest is 32 bytes"))
}

/// RNG seeded from [`derive_seed`].
pub fn rng_for(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label, index))
}
