use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::model::{Adapters, Model};
use crate::prompt::PromptEncoder;
use crate::tokenizer::BaseTokenizer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub item: usize,
    pub expected: String,
    pub decoded: String,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub fraction: f64,
    pub entries: Vec<ProbeEntry>,
}

impl ProbeReport {
    /// One line per probed item: match flag, item index, expected and decoded title.
    pub fn transcript(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let flag = if e.exact { "ok  " } else { "MISS" };
            let _ = writeln!(s, "{flag} item {:>6}  expected: {}  decoded: {}", e.item, e.expected, e.decoded);
        }
        let hits = self.entries.iter().filter(|e| e.exact).count();
        let _ = writeln!(s, "exact {hits}/{} = {:.4}", self.entries.len(), self.fraction);
        s
    }
}

/// Feed each item's token after the instruction and greedily decode as many
/// tokens as its title has; count exact title matches.
pub fn id_title_probe<F: Float>(
    model: &Model<F>,
    adapters: Option<&Adapters<F>>,
    encoder: &PromptEncoder,
    tok: &BaseTokenizer,
    items: &[usize],
) -> Result<ProbeReport> {
    if !encoder.include_titles() {
        return Err(Error::invalid("the probe needs a model trained with titles in its prompts"));
    }
    if items.is_empty() {
        return Err(Error::invalid("no items to probe"));
    }
    let mut entries = Vec::with_capacity(items.len());
    for &item in items {
        let want = encoder.title_tokens(item)?;
        let prompt = encoder.encode_item_probe(item)?;
        let got = model.greedy_decode(adapters, &prompt, want.len())?;
        entries.push(ProbeEntry {
            item,
            expected: tok.decode(want),
            decoded: decode_mixed(tok, encoder, &got),
            exact: got == want,
        });
    }
    let hits = entries.iter().filter(|e| e.exact).count();
    Ok(ProbeReport {
        fraction: hits as f64 / entries.len() as f64,
        entries,
    })
}

/// Base tokens as words, item tokens as `<item:N>`.
fn decode_mixed(tok: &BaseTokenizer, encoder: &PromptEncoder, ids: &[u32]) -> String {
    let vocab = encoder.vocab();
    ids.iter()
        .map(|&id| match vocab.token_to_item(id) {
            Some(i) => format!("<item:{i}>"),
            None => tok.token(id).unwrap_or("<unk>").to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}
