//! Prompt samples and their token encoding.
//!
//! A sample is rendered as
//! `BOS instruction (item [title])* target EOS`
//! where each history item is its appended item token, optionally followed by
//! the tokens of its title.

use serde::{Deserialize, Serialize};

use crate::catalog::ItemCatalog;
use crate::error::{Error, Result};
use crate::tokenizer::{BaseTokenizer, TokenId, BOS, EOS};
use crate::vocab::ExpandedVocabulary;

/// Which positions contribute to the next-token loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossScope {
    #[default]
    All,
    OutputOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptFormat {
    pub instruction: String,
    pub include_titles: bool,
    pub loss_scope: LossScope,
}

impl Default for PromptFormat {
    fn default() -> Self {
        PromptFormat {
            instruction: "recommend the next item given this history".to_string(),
            include_titles: true,
            loss_scope: LossScope::All,
        }
    }
}

/// One (history, next item) pair. History is chronological.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSample {
    pub history: Vec<usize>,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSample {
    pub tokens: Vec<TokenId>,
    /// `loss_mask[t]` marks token `t` as a prediction target (predicted from
    /// position `t - 1`). Always false at position 0.
    pub loss_mask: Vec<bool>,
    /// Position of the target item token; `tokens[..target_pos]` is the
    /// inference prompt.
    pub target_pos: usize,
}

impl EncodedSample {
    pub fn prompt(&self) -> &[TokenId] {
        &self.tokens[..self.target_pos]
    }
}

/// Pre-tokenizes the instruction and every title once.
#[derive(Debug, Clone)]
pub struct PromptEncoder {
    vocab: ExpandedVocabulary,
    instruction: Vec<TokenId>,
    titles: Vec<Vec<TokenId>>,
    include_titles: bool,
    loss_scope: LossScope,
}

impl PromptEncoder {
    pub fn new(
        tok: &BaseTokenizer,
        vocab: ExpandedVocabulary,
        catalog: &ItemCatalog,
        format: &PromptFormat,
    ) -> Result<Self> {
        if vocab.base_size != tok.vocab_size() || vocab.item_count != catalog.len() {
            return Err(Error::Mismatch(format!(
                "vocabulary ({} base, {} items) does not match tokenizer ({}) / catalog ({})",
                vocab.base_size,
                vocab.item_count,
                tok.vocab_size(),
                catalog.len()
            )));
        }
        Ok(PromptEncoder {
            vocab,
            instruction: tok.encode(&format.instruction),
            titles: catalog.titles().map(|t| tok.encode(t)).collect(),
            include_titles: format.include_titles,
            loss_scope: format.loss_scope,
        })
    }

    pub fn vocab(&self) -> ExpandedVocabulary {
        self.vocab
    }

    pub fn include_titles(&self) -> bool {
        self.include_titles
    }

    pub fn title_tokens(&self, item: usize) -> Result<&[TokenId]> {
        self.titles
            .get(item)
            .map(Vec::as_slice)
            .ok_or(Error::OutOfRange {
                what: "item",
                index: item,
                size: self.titles.len(),
            })
    }

    fn push_prefix(&self, out: &mut Vec<TokenId>) {
        out.push(BOS);
        out.extend_from_slice(&self.instruction);
    }

    fn push_history(&self, history: &[usize], out: &mut Vec<TokenId>) -> Result<()> {
        for &item in history {
            out.push(self.vocab.item_token_id(item)?);
            if self.include_titles {
                out.extend_from_slice(self.title_tokens(item)?);
            }
        }
        Ok(())
    }

    /// Inference prompt: everything up to where the target token would go.
    pub fn encode_prompt(&self, history: &[usize]) -> Result<Vec<TokenId>> {
        if history.is_empty() {
            return Err(Error::invalid("prompt history is empty"));
        }
        let mut tokens = Vec::new();
        self.push_prefix(&mut tokens);
        self.push_history(history, &mut tokens)?;
        Ok(tokens)
    }

    pub fn encode(&self, sample: &PromptSample) -> Result<EncodedSample> {
        let mut tokens = self.encode_prompt(&sample.history)?;
        let target_pos = tokens.len();
        tokens.push(self.vocab.item_token_id(sample.target)?);
        tokens.push(EOS);
        let loss_mask = (0..tokens.len())
            .map(|t| match self.loss_scope {
                LossScope::All => t > 0,
                LossScope::OutputOnly => t >= target_pos,
            })
            .collect();
        Ok(EncodedSample {
            tokens,
            loss_mask,
            target_pos,
        })
    }

    /// Prompt for the id-to-title probe: instruction followed by one item token.
    pub fn encode_item_probe(&self, item: usize) -> Result<Vec<TokenId>> {
        let mut tokens = Vec::new();
        self.push_prefix(&mut tokens);
        tokens.push(self.vocab.item_token_id(item)?);
        Ok(tokens)
    }
}

/// One-shot encoding without keeping an encoder around.
pub fn encode_sample(
    vocab: ExpandedVocabulary,
    tok: &BaseTokenizer,
    catalog: &ItemCatalog,
    format: &PromptFormat,
    sample: &PromptSample,
) -> Result<EncodedSample> {
    PromptEncoder::new(tok, vocab, catalog, format)?.encode(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ItemCatalog;

    fn fixture(include_titles: bool) -> (BaseTokenizer, ItemCatalog, PromptFormat) {
        let catalog = ItemCatalog::from_pairs(
            (0..8).map(|i| (format!("ext{i}"), format!("star game{i}"))),
        )
        .unwrap();
        let format = PromptFormat {
            instruction: "pick one".into(),
            include_titles,
            loss_scope: LossScope::All,
        };
        let tok = BaseTokenizer::build(
            catalog.titles().chain(std::iter::once(format.instruction.as_str())),
            1,
        )
        .unwrap();
        (tok, catalog, format)
    }

    #[test]
    fn item_positions_without_titles() {
        let (tok, cat, fmt) = fixture(false);
        let v = ExpandedVocabulary::expand(&tok, &cat);
        let base = v.base_size as TokenId;
        let s = PromptSample {
            history: vec![2, 7],
            target: 4,
        };
        let e = encode_sample(v, &tok, &cat, &fmt, &s).unwrap();
        let n = e.tokens.len();
        assert_eq!(&e.tokens[n - 4..], &[base + 2, base + 7, base + 4, EOS]);
        assert_eq!(e.tokens[0], BOS);
        assert_eq!(e.tokens[e.target_pos], base + 4);
    }

    #[test]
    fn titles_follow_item_tokens() {
        let (tok, cat, fmt) = fixture(true);
        let v = ExpandedVocabulary::expand(&tok, &cat);
        let s = PromptSample {
            history: vec![3],
            target: 1,
        };
        let e = encode_sample(v, &tok, &cat, &fmt, &s).unwrap();
        let pos = e
            .tokens
            .iter()
            .position(|&t| t == v.item_token_id(3).unwrap())
            .unwrap();
        let title = tok.encode("star game3");
        assert_eq!(&e.tokens[pos + 1..pos + 1 + title.len()], title.as_slice());
        let last_item = e.tokens.iter().rev().find(|&&t| v.is_item_token(t)).unwrap();
        assert_eq!(*last_item, v.item_token_id(1).unwrap());
    }

    #[test]
    fn title_toggle_keeps_item_subsequence() {
        let (tok, cat, _) = fixture(true);
        let v = ExpandedVocabulary::expand(&tok, &cat);
        let s = PromptSample {
            history: vec![0, 5, 5, 6],
            target: 2,
        };
        let items = |titles: bool| {
            let fmt = PromptFormat {
                instruction: "pick one".into(),
                include_titles: titles,
                loss_scope: LossScope::All,
            };
            let e = encode_sample(v, &tok, &cat, &fmt, &s).unwrap();
            e.tokens
                .into_iter()
                .filter(|&t| v.is_item_token(t))
                .collect::<Vec<_>>()
        };
        assert_eq!(items(true), items(false));
    }

    #[test]
    fn loss_scope_masks() {
        let (tok, cat, mut fmt) = fixture(true);
        let v = ExpandedVocabulary::expand(&tok, &cat);
        let s = PromptSample {
            history: vec![1],
            target: 0,
        };
        let all = encode_sample(v, &tok, &cat, &fmt, &s).unwrap();
        assert!(!all.loss_mask[0]);
        assert!(all.loss_mask[1..].iter().all(|&m| m));
        fmt.loss_scope = LossScope::OutputOnly;
        let out = encode_sample(v, &tok, &cat, &fmt, &s).unwrap();
        let marked: Vec<usize> = (0..out.tokens.len()).filter(|&t| out.loss_mask[t]).collect();
        assert_eq!(marked, vec![out.target_pos, out.target_pos + 1]);
        assert_eq!(out.tokens, all.tokens);
    }

    #[test]
    fn out_of_range_history_rejected() {
        let (tok, cat, fmt) = fixture(true);
        let v = ExpandedVocabulary::expand(&tok, &cat);
        let s = PromptSample {
            history: vec![8],
            target: 0,
        };
        assert!(encode_sample(v, &tok, &cat, &fmt, &s).is_err());
    }

    #[test]
    fn deterministic() {
        let (tok, cat, fmt) = fixture(true);
        let v = ExpandedVocabulary::expand(&tok, &cat);
        let s = PromptSample {
            history: vec![4, 2],
            target: 3,
        };
        assert_eq!(
            encode_sample(v, &tok, &cat, &fmt, &s).unwrap(),
            encode_sample(v, &tok, &cat, &fmt, &s).unwrap()
        );
    }
}
