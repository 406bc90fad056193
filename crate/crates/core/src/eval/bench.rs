use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::model::{recommend_top_k, Adapters, Model};
use crate::prompt::{PromptEncoder, PromptSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    /// Rank items from one forward pass.
    Logits,
    /// Greedily decode the target's title, one pass per title token.
    Generative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: BenchMode,
    pub samples: usize,
    pub warmup: usize,
    pub forward_passes: u64,
    pub passes_per_sample: f64,
    pub samples_per_second: f64,
    pub latencies_ms: Vec<f64>,
}

const MIN_SAMPLES: usize = 100;

/// Time `samples` single-threaded after `warmup` untimed samples. Warmup
/// samples are taken from the front of the list and are not counted.
pub fn throughput_bench<F: Float>(
    model: &Model<F>,
    adapters: Option<&Adapters<F>>,
    encoder: &PromptEncoder,
    samples: &[PromptSample],
    mode: BenchMode,
    warmup: usize,
) -> Result<BenchReport> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "benchmark needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let run = |s: &PromptSample| -> Result<()> {
        let prompt = encoder.encode_prompt(&s.history)?;
        match mode {
            BenchMode::Logits => {
                recommend_top_k(model, adapters, &prompt, 10)?;
            }
            BenchMode::Generative => {
                let steps = encoder.title_tokens(s.target)?.len();
                model.greedy_decode(adapters, &prompt, steps)?;
            }
        }
        Ok(())
    };
    for s in samples.iter().cycle().take(warmup) {
        run(s)?;
    }
    model.reset_forward_passes();
    let mut latencies_ms = Vec::with_capacity(samples.len());
    let start = Instant::now();
    for s in samples {
        let t = Instant::now();
        run(s)?;
        latencies_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let secs = start.elapsed().as_secs_f64();
    let passes = model.forward_passes();
    Ok(BenchReport {
        mode,
        samples: samples.len(),
        warmup,
        forward_passes: passes,
        passes_per_sample: passes as f64 / samples.len() as f64,
        samples_per_second: samples.len() as f64 / secs.max(1e-9),
        latencies_ms,
    })
}

/// `sample,latency_ms` rows for percentile analysis.
pub fn write_latency_csv(path: &Path, report: &BenchReport) -> Result<()> {
    let mut s = String::from("sample,latency_ms\n");
    for (i, l) in report.latencies_ms.iter().enumerate() {
        s.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
