use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::DEFAULT_PRIME;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ff_dim: usize,
    pub max_seq_len: usize,
    /// Filled in from the tokenizer when left at zero.
    pub base_vocab: usize,
    /// Filled in from the catalog when left at zero.
    pub item_count: usize,
    /// Item table compression rate `|I| / |S|`.
    pub rate: f64,
    /// Hash functions per item.
    pub k: usize,
    /// Item logits are inner products with the compressed item embeddings.
    pub tied_item_head: bool,
    pub hash_prime: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            heads: 4,
            dim: 64,
            ff_dim: 256,
            max_seq_len: 256,
            base_vocab: 0,
            item_count: 0,
            rate: 2.0,
            k: 2,
            tied_item_head: true,
            hash_prime: DEFAULT_PRIME,
        }
    }
}

impl ModelConfig {
    pub fn vocab_size(&self) -> usize {
        self.base_vocab + self.item_count
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if self.layers == 0 || self.heads == 0 || self.dim == 0 || self.ff_dim == 0 {
            return fail("layers, heads, dim and ff_dim must be positive".into());
        }
        if !self.dim.is_multiple_of(self.heads) {
            return fail(format!("dim {} not divisible by heads {}", self.dim, self.heads));
        }
        if self.max_seq_len == 0 {
            return fail("max_seq_len must be positive".into());
        }
        if self.base_vocab < 4 {
            return fail("base vocabulary must hold at least the special tokens".into());
        }
        if self.item_count == 0 {
            return fail("model needs at least one item".into());
        }
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if !(self.rate >= 1.0) {
            return fail(format!("compression rate must be >= 1, got {}", self.rate));
        }
        Ok(())
    }
}
