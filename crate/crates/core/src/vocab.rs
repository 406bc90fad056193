//! Vocabulary expansion: every catalog item becomes one token appended after
//! the base vocabulary.

use serde::{Deserialize, Serialize};

use crate::catalog::ItemCatalog;
use crate::error::{Error, Result};
use crate::tokenizer::{BaseTokenizer, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedVocabulary {
    pub base_size: usize,
    pub item_count: usize,
}

impl ExpandedVocabulary {
    pub fn new(base_size: usize, item_count: usize) -> Self {
        ExpandedVocabulary {
            base_size,
            item_count,
        }
    }

    pub fn expand(tok: &BaseTokenizer, catalog: &ItemCatalog) -> Self {
        Self::new(tok.vocab_size(), catalog.len())
    }

    pub fn total_size(&self) -> usize {
        self.base_size + self.item_count
    }

    pub fn item_token_id(&self, item: usize) -> Result<TokenId> {
        if item >= self.item_count {
            return Err(Error::OutOfRange {
                what: "item",
                index: item,
                size: self.item_count,
            });
        }
        Ok((self.base_size + item) as TokenId)
    }

    pub fn token_to_item(&self, token: TokenId) -> Option<usize> {
        let t = token as usize;
        (t >= self.base_size && t < self.total_size()).then(|| t - self.base_size)
    }

    pub fn is_item_token(&self, token: TokenId) -> bool {
        self.token_to_item(token).is_some()
    }
}
