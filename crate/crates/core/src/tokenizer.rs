//! Whitespace word-level tokenizer built from a training corpus.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const BOS: TokenId = 2;
pub const EOS: TokenId = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseTokenizer {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tokens: BTreeMap<String, TokenId>,
}

impl BaseTokenizer {
    /// Collect every whitespace-delimited word occurring at least `min_count`
    /// times. Ids follow first appearance, after the four specials.
    pub fn build<'a, I>(corpus: I, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut order: Vec<&str> = Vec::new();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut docs = 0usize;
        for text in corpus {
            docs += 1;
            for w in text.split_whitespace() {
                let c = counts.entry(w).or_insert(0);
                if *c == 0 {
                    order.push(w);
                }
                *c += 1;
            }
        }
        if docs == 0 {
            return Err(Error::invalid("tokenizer corpus is empty"));
        }
        let words = order
            .into_iter()
            .filter(|w| counts[w] >= min_count.max(1) && !SPECIALS.contains(w));
        Ok(Self::from_tokens(
            SPECIALS.iter().copied().chain(words).map(str::to_string),
        ))
    }

    fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let id_to_token: Vec<String> = tokens.into_iter().collect();
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        BaseTokenizer {
            id_to_token,
            token_to_id,
        }
    }

    /// Number of base tokens, specials included.
    pub fn vocab_size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .map(|w| self.token_to_id.get(w).copied().unwrap_or(UNK))
            .collect()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let manifest = Manifest {
            tokens: self.token_to_id.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let n = manifest.tokens.len();
        let mut slots: Vec<Option<String>> = vec![None; n];
        for (tok, id) in manifest.tokens {
            let slot = slots
                .get_mut(id as usize)
                .ok_or_else(|| Error::invalid(format!("token id {id} not dense in manifest")))?;
            if slot.replace(tok).is_some() {
                return Err(Error::invalid(format!("token id {id} assigned twice")));
            }
        }
        let tokens: Vec<String> = slots.into_iter().map(|s| s.unwrap()).collect();
        if tokens.len() < SPECIALS.len() || tokens[..4] != SPECIALS.map(str::to_string) {
            return Err(Error::invalid("tokenizer manifest lacks the special tokens"));
        }
        Ok(Self::from_tokens(tokens))
    }
}
