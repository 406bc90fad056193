use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{hr_at_rank, ndcg_at_rank, rank_of};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::model::{item_logits, Adapters, Model};
use crate::prompt::{PromptEncoder, PromptSample};
use ndarray::ArrayView1;

pub const DEFAULT_KS: [usize; 3] = [5, 10, 20];

/// Mean NG@K and HR@K over a set of held-out samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mode: String,
    pub samples: usize,
    pub ks: Vec<usize>,
    /// Keys `ng@K` and `hr@K`.
    pub metrics: BTreeMap<String, f64>,
    /// Wall-clock rate; kept out of the serialized form so reports from
    /// identical runs compare byte for byte.
    #[serde(skip)]
    pub samples_per_second: Option<f64>,
}

impl MetricReport {
    fn from_ranks(mode: &str, ks: &[usize], ranks: &[usize]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::invalid("evaluation set is empty"));
        }
        if ks.is_empty() || ks.contains(&0) {
            return Err(Error::invalid("cutoffs must be non-empty and positive"));
        }
        let n = ranks.len() as f64;
        let mut metrics = BTreeMap::new();
        for &k in ks {
            let (mut ng, mut hr) = (0.0, 0.0);
            for &r in ranks {
                ng += ndcg_at_rank(r, k);
                hr += hr_at_rank(r, k);
            }
            metrics.insert(format!("ng@{k}"), ng / n);
            metrics.insert(format!("hr@{k}"), hr / n);
        }
        Ok(MetricReport {
            mode: mode.to_string(),
            samples: ranks.len(),
            ks: ks.to_vec(),
            metrics,
            samples_per_second: None,
        })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn hr(&self, k: usize) -> f64 {
        self.metrics.get(&format!("hr@{k}")).copied().unwrap_or(f64::NAN)
    }

    pub fn ng(&self, k: usize) -> f64 {
        self.metrics.get(&format!("ng@{k}")).copied().unwrap_or(f64::NAN)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in &self.metrics {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }

    pub fn write(&self, json: &Path, csv: &Path) -> Result<()> {
        std::fs::write(json, self.to_json()?).map_err(|e| Error::io(json, e))?;
        std::fs::write(csv, self.to_csv()).map_err(|e| Error::io(csv, e))
    }
}

/// 1-based rank of `truth` when items are sorted by descending score with
/// ties broken by ascending index.
pub fn item_rank<F: Float>(scores: ArrayView1<F>, truth: usize) -> usize {
    let t = scores[truth];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > t || (s == t && i < truth))
        .count()
}

/// One forward pass per sample; items ranked by the trailing item logits.
pub fn evaluate<F: Float>(
    model: &Model<F>,
    adapters: Option<&Adapters<F>>,
    encoder: &PromptEncoder,
    samples: &[PromptSample],
    ks: &[usize],
) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let n_items = model.config.item_count;
    let start = std::time::Instant::now();
    let ranks = samples
        .iter()
        .map(|s| {
            let prompt = encoder.encode_prompt(&s.history)?;
            let logits = model.last_logits(adapters, &prompt)?;
            Ok(item_rank(item_logits(logits.view(), n_items), s.target))
        })
        .collect::<Result<Vec<_>>>()?;
    let secs = start.elapsed().as_secs_f64();
    let mut report = MetricReport::from_ranks("logits", ks, &ranks)?;
    report.samples_per_second = Some(samples.len() as f64 / secs.max(1e-9));
    Ok(report)
}

/// Score an arbitrary ranker that returns an ordered item list per sample.
/// Items missing from a list rank after everything listed.
pub fn evaluate_ranker<R>(mode: &str, samples: &[PromptSample], ks: &[usize], mut ranker: R) -> Result<MetricReport>
where
    R: FnMut(&PromptSample) -> Result<Vec<usize>>,
{
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let ranks = samples
        .iter()
        .map(|s| {
            let ranked = ranker(s)?;
            Ok(rank_of(&ranked, s.target).unwrap_or(ranked.len().max(max_k) + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    MetricReport::from_ranks(mode, ks, &ranks)
}
