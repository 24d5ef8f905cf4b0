//! Seed derivation for reproducible, order-independent randomness.

use sha2::{Digest, Sha256};

/// Builds a 64-bit seed from a sequence of tagged components.
///
/// The output depends only on the components and their order, so seeds for
/// rounds, folds or sweep cells can be computed in any execution order.
#[derive(Debug, Clone)]
pub struct SeedBuilder {
    hasher: Sha256,
}

impl SeedBuilder {
    pub fn new(root: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"loopsim-seed");
        hasher.update(root.to_le_bytes());
        Self { hasher }
    }

    pub fn tag(mut self, tag: &str) -> Self {
        self.hasher.update((tag.len() as u64).to_le_bytes());
        self.hasher.update(tag.as_bytes());
        self
    }

    pub fn int(mut self, value: u64) -> Self {
        self.hasher.update(value.to_le_bytes());
        self
    }

    /// Floats are mixed by bit pattern; `-0.0` and `0.0` differ.
    pub fn float(mut self, value: f64) -> Self {
        self.hasher.update(value.to_bits().to_le_bytes());
        self
    }

    pub fn finish(self) -> u64 {
        let digest = self.hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }
}
