//! End-to-end runs: configuration, data preparation, training, evaluation,
//! compression sweeps and the title/table ablation.
//!
//! Every random choice derives from [`RunConfig::seed`] through named
//! substreams (`data`, `split`, `init`, `hash`, `training`), so a run is fully
//! determined by its resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::catalog::ItemCatalog;
use crate::data::{
    generate_synthetic, leave_last_out_split, load_interactions, read_samples, write_samples, DatasetSplit,
    InteractionSequence, SyntheticSpec, TransitionMatrix, DEFAULT_MAX_HISTORY,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, id_title_probe, MetricReport, ProbeReport, DEFAULT_KS};
use crate::model::{Model, ModelConfig};
use crate::prompt::{PromptEncoder, PromptFormat};
use crate::seed::substream;
use crate::tokenizer::BaseTokenizer;
use crate::train::{
    encode_training_set, title_corpus, title_history_corpus, train, PretrainCorpus, Checkpoint, TrainConfig, TrainMode, TrainOutcome, TrainState,
};
use crate::vocab::ExpandedVocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Directory written by [`write_prepared`]; takes precedence over `interactions`.
    pub prepared: Option<PathBuf>,
    /// JSON-lines interaction log; the synthetic corpus is used when absent.
    pub interactions: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    pub max_history: usize,
    pub val_fraction: f64,
    /// Minimum word count for the base tokenizer.
    pub min_count: usize,
    pub instruction: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            prepared: None,
            interactions: None,
            synthetic: SyntheticSpec::default(),
            max_history: DEFAULT_MAX_HISTORY,
            val_fraction: 0.05,
            min_count: 1,
            instruction: PromptFormat::default().instruction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub ks: Vec<usize>,
    /// Items sampled by the id-to-title probe.
    pub probe_items: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            ks: DEFAULT_KS.to_vec(),
            probe_items: 50,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

/// Set `path` (dot separated) inside a JSON object to `raw`, parsed as JSON
/// when possible and kept as a string otherwise.
pub fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let mut parts = path.split('.').peekable();
    while let Some(key) = parts.next() {
        if key.is_empty() {
            return Err(Error::invalid(format!("bad override path {path:?}")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::invalid(format!("{path:?}: {key:?} is not inside an object")))?;
        if parts.peek().is_none() {
            if !obj.contains_key(key) {
                return Err(Error::invalid(format!("unknown configuration key {path:?}")));
            }
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj
            .get_mut(key)
            .ok_or_else(|| Error::invalid(format!("unknown configuration key {path:?}")))?;
    }
    Err(Error::invalid("empty override path"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Apply `key.path=value` overrides on top of this configuration.
    pub fn with_overrides<'a, I: IntoIterator<Item = &'a str>>(&self, overrides: I) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for o in overrides {
            let (k, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("override {o:?} is not key=value")))?;
            apply_override(&mut v, k.trim(), raw.trim())?;
        }
        Ok(serde_json::from_value(v)?)
    }

    /// Copy with component seeds derived from the root seed.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.data.synthetic.seed = substream(self.seed, "data");
        c.train.seed = substream(self.seed, "training");
        c
    }

    /// Hex SHA-256 of the resolved configuration. Settings that only affect
    /// scoring (cutoffs, probe size, output directory) are left out, so a
    /// checkpoint can be re-scored under different cutoffs.
    pub fn fingerprint(&self) -> String {
        let mut c = self.resolved();
        c.out_dir = PathBuf::new();
        c.ks = Vec::new();
        c.probe_items = 0;
        let json = serde_json::to_string(&c).expect("configuration serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn prompt_format(&self) -> PromptFormat {
        PromptFormat {
            instruction: self.data.instruction.clone(),
            include_titles: self.train.include_titles,
            loss_scope: self.train.loss_scope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::invalid("ks must be non-empty and positive"));
        }
        for p in [&self.data.prepared, &self.data.interactions].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::invalid(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

/// Catalog, sequences, split and base tokenizer for one run.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub catalog: ItemCatalog,
    pub sequences: Vec<InteractionSequence>,
    pub split: DatasetSplit,
    pub tokenizer: BaseTokenizer,
    /// Known next-item probabilities for synthetic corpora.
    pub transitions: Option<TransitionMatrix>,
}

impl Dataset {
    /// Split and tokenizer over an existing catalog and its sequences.
    pub fn build(
        catalog: ItemCatalog,
        sequences: Vec<InteractionSequence>,
        transitions: Option<TransitionMatrix>,
        data: &DataConfig,
        split_seed: u64,
    ) -> Result<Self> {
        if catalog.is_empty() || sequences.is_empty() {
            return Err(Error::invalid("dataset has no items or no sequences"));
        }
        let split = leave_last_out_split(&sequences, data.max_history, data.val_fraction, split_seed)?;
        let tokenizer = BaseTokenizer::build(
            catalog.titles().chain(std::iter::once(data.instruction.as_str())),
            data.min_count,
        )?;
        Ok(Dataset {
            catalog,
            sequences,
            split,
            tokenizer,
            transitions,
        })
    }

    pub fn vocab(&self) -> ExpandedVocabulary {
        ExpandedVocabulary::expand(&self.tokenizer, &self.catalog)
    }

    pub fn encoder(&self, format: &PromptFormat) -> Result<PromptEncoder> {
        PromptEncoder::new(&self.tokenizer, self.vocab(), &self.catalog, format)
    }

    /// Model configuration with the vocabulary sizes filled in.
    pub fn model_config(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            base_vocab: self.tokenizer.vocab_size(),
            item_count: self.catalog.len(),
            ..base.clone()
        }
    }
}

pub fn prepare_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let cfg = cfg.resolved();
    if let Some(dir) = &cfg.data.prepared {
        return read_prepared(dir);
    }
    let split_seed = substream(cfg.seed, "split");
    match &cfg.data.interactions {
        Some(path) => {
            let (catalog, sequences) = load_interactions(path)?;
            Dataset::build(catalog, sequences, None, &cfg.data, split_seed)
        }
        None => {
            let corpus = generate_synthetic(&cfg.data.synthetic)?;
            Dataset::build(
                corpus.catalog,
                corpus.sequences,
                Some(corpus.transitions),
                &cfg.data,
                split_seed,
            )
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Catalog, tokenizer, split manifests, sequences and (when known) the transition matrix.
pub fn write_prepared(dir: &Path, data: &Dataset) -> Result<()> {
    create_dir(dir)?;
    data.catalog.write_jsonl(&dir.join("catalog.jsonl"))?;
    data.tokenizer.save(&dir.join("tokenizer.json"))?;
    write_samples(&dir.join("train.jsonl"), &data.split.train)?;
    write_samples(&dir.join("validation.jsonl"), &data.split.validation)?;
    write_samples(&dir.join("test.jsonl"), &data.split.test)?;
    let seq_path = dir.join("sequences.json");
    fs::write(&seq_path, serde_json::to_string(&data.sequences)?).map_err(|e| Error::io(&seq_path, e))?;
    if let Some(t) = &data.transitions {
        t.save(&dir.join("transitions.json"))?;
    }
    Ok(())
}

pub fn read_prepared(dir: &Path) -> Result<Dataset> {
    let catalog = ItemCatalog::read_jsonl(&dir.join("catalog.jsonl"))?;
    let tokenizer = BaseTokenizer::load(&dir.join("tokenizer.json"))?;
    let split = DatasetSplit {
        train: read_samples(&dir.join("train.jsonl"))?,
        validation: read_samples(&dir.join("validation.jsonl"))?,
        test: read_samples(&dir.join("test.jsonl"))?,
    };
    let seq_path = dir.join("sequences.json");
    let text = fs::read_to_string(&seq_path).map_err(|e| Error::io(&seq_path, e))?;
    let sequences = serde_json::from_str(&text)?;
    let t = dir.join("transitions.json");
    let transitions = if t.exists() { Some(TransitionMatrix::load(&t)?) } else { None };
    let n = catalog.len();
    let out_of_range = split
        .train
        .iter()
        .chain(&split.validation)
        .chain(&split.test)
        .flat_map(|s| s.history.iter().chain(std::iter::once(&s.target)))
        .find(|&&i| i >= n);
    if let Some(&i) = out_of_range {
        return Err(Error::OutOfRange {
            what: "item",
            index: i,
            size: n,
        });
    }
    Ok(Dataset {
        catalog,
        sequences,
        split,
        tokenizer,
        transitions,
    })
}

/// Build, optionally pretrain, and train a model for `cfg` on `data`.
///
/// In adapter mode the backbone is first trained on catalog titles alone
/// (item table untouched), then finetuned with adapters.
pub fn train_run(cfg: &RunConfig, data: &Dataset) -> Result<Checkpoint> {
    cfg.validate()?;
    let rc = cfg.resolved();
    let model_cfg = data.model_config(&rc.model);
    let mut model = Model::<f32>::new(model_cfg, substream(rc.seed, "init"), substream(rc.seed, "hash"))?;

    if rc.train.mode == TrainMode::Lora && rc.train.pretrain_epochs > 0 {
        let pre = TrainConfig {
            mode: TrainMode::Full,
            freeze_item_table: true,
            learning_rate: rc.train.pretrain_learning_rate,
            max_epochs: rc.train.pretrain_epochs,
            max_steps: None,
            seed: substream(rc.seed, "pretraining"),
            ..rc.train.clone()
        };
        let corpus = match rc.train.pretrain_corpus {
            PretrainCorpus::Titles => title_corpus(&data.tokenizer, &data.catalog),
            PretrainCorpus::TitleHistories => title_history_corpus(&data.tokenizer, &data.catalog, &data.split.train)?,
        };
        model = train(TrainState::new(model, &pre)?, &corpus, &[], &pre)?.last.model;
    }

    let encoder = data.encoder(&rc.prompt_format())?;
    let scope = rc.train.loss_scope;
    let train_set = encode_training_set(&encoder, &data.split.train, rc.train.sample_packing, scope)?;
    let val_set = encode_training_set(&encoder, &data.split.validation, rc.train.sample_packing, scope)?;
    let TrainOutcome {
        best, best_val_loss, ..
    } = train(TrainState::new(model, &rc.train)?, &train_set, &val_set, &rc.train)?;
    Ok(Checkpoint {
        state: best,
        fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
        best_val_loss,
        metrics: Default::default(),
    })
}

/// Which held-out samples to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Validation,
    Test,
}

/// Evaluate a checkpoint trained under `cfg`; refuses a checkpoint from a different configuration.
pub fn evaluate_run(cfg: &RunConfig, data: &Dataset, ckpt: &Checkpoint, split: EvalSplit) -> Result<MetricReport> {
    let expected = cfg.fingerprint();
    if ckpt.fingerprint != expected {
        return Err(Error::Mismatch(format!(
            "checkpoint fingerprint {} does not match configuration {}",
            ckpt.fingerprint, expected
        )));
    }
    let encoder = data.encoder(&cfg.prompt_format())?;
    let samples = match split {
        EvalSplit::Validation => &data.split.validation,
        EvalSplit::Test => &data.split.test,
    };
    evaluate(&ckpt.state.model, ckpt.state.adapters.as_ref(), &encoder, samples, &cfg.ks)
}

/// `n` distinct items drawn from the run's `probe` substream, ascending.
pub fn probe_items(cfg: &RunConfig, n_items: usize, n: usize) -> Vec<usize> {
    let mut v = rand::seq::index::sample(&mut crate::seed::rng(cfg.seed, "probe"), n_items, n.min(n_items)).into_vec();
    v.sort_unstable();
    v
}

/// Id-to-title probe over `n` seeded items of the run's catalog.
pub fn run_probe(cfg: &RunConfig, data: &Dataset, ckpt: &Checkpoint, n: usize) -> Result<ProbeReport> {
    let encoder = data.encoder(&cfg.prompt_format())?;
    let items = probe_items(cfg, data.catalog.len(), n);
    id_title_probe(
        &ckpt.state.model,
        ckpt.state.adapters.as_ref(),
        &encoder,
        &data.tokenizer,
        &items,
    )
}

/// Metric report stamped with the run that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub fingerprint: String,
    pub seed: u64,
    #[serde(flatten)]
    pub report: MetricReport,
}

impl RunMetrics {
    pub fn new(cfg: &RunConfig, report: MetricReport) -> Self {
        RunMetrics {
            fingerprint: cfg.fingerprint(),
            seed: cfg.seed,
            report,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{}fingerprint,{}\nseed,{}\n",
            self.report.to_csv(),
            self.fingerprint,
            self.seed
        )
    }

    /// `<stem>.json` and `<stem>.csv` inside `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        create_dir(dir)?;
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))
    }
}

/// Write the configuration, prepared data and checkpoint of a run to `cfg.out_dir`.
pub fn write_run(cfg: &RunConfig, data: &Dataset, ckpt: &Checkpoint) -> Result<()> {
    let dir = &cfg.out_dir;
    create_dir(dir)?;
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg)?).map_err(|e| Error::io(&path, e))?;
    write_prepared(&dir.join("data"), data)?;
    ckpt.save(&dir.join("checkpoint"))?;
    crate::train::write_curve_csv(&dir.join("loss_curve.csv"), &ckpt.state.curve)
}

/// Configuration, data and checkpoint of a run directory written by [`write_run`].
pub fn read_run(dir: &Path) -> Result<(RunConfig, Dataset, Checkpoint)> {
    let cfg = RunConfig::load(&dir.join("config.json"))?;
    let data = read_prepared(&dir.join("data"))?;
    let ckpt = Checkpoint::load(&dir.join("checkpoint"))?;
    Ok((cfg, data, ckpt))
}

/// Train and evaluate one leg; writes `<out_dir>` with metrics.
pub fn train_and_evaluate(cfg: &RunConfig, data: &Dataset) -> Result<(Checkpoint, MetricReport)> {
    let ckpt = train_run(cfg, data)?;
    let report = evaluate_run(cfg, data, &ckpt, EvalSplit::Test)?;
    Ok((ckpt, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub rate: f64,
    pub shared_rows: usize,
    pub item_parameters: usize,
    pub report: MetricReport,
}

fn sweep_csv(ks: &[usize], rows: &[SweepRow]) -> String {
    let mut s = String::from("rate,shared_rows,item_parameters");
    for k in ks {
        s.push_str(&format!(",ng@{k},hr@{k}"));
    }
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{}", r.rate, r.shared_rows, r.item_parameters));
        for &k in ks {
            s.push_str(&format!(",{},{}", r.report.ng(k), r.report.hr(k)));
        }
        s.push('\n');
    }
    s
}

fn sweep_leg(cfg: &RunConfig, data: &Dataset, rate: f64, write: bool) -> Result<SweepRow> {
    let mut leg = cfg.clone();
    leg.model.rate = rate;
    leg.out_dir = cfg.out_dir.join(format!("rate_{rate}"));
    let (ckpt, report) = train_and_evaluate(&leg, data)?;
    if write {
        write_run(&leg, data, &ckpt)?;
        RunMetrics::new(&leg, report.clone()).write(&leg.out_dir, "metrics")?;
    }
    let stats = ckpt.state.model.params.items.compression_stats();
    Ok(SweepRow {
        rate,
        shared_rows: ckpt.state.model.params.items.rows(),
        item_parameters: stats.parameter_count,
        report,
    })
}

/// One model per compression rate, everything else fixed. With `write`,
/// each leg goes to `<out_dir>/rate_<r>` and `sweep.csv` is rewritten after
/// every finished leg, so a failure keeps the legs done so far. With
/// `parallel`, legs run on separate threads.
pub fn run_sweep(cfg: &RunConfig, data: &Dataset, rates: &[f64], write: bool, parallel: bool) -> Result<Vec<SweepRow>> {
    if rates.is_empty() || rates.iter().any(|&r| !(r >= 1.0)) {
        return Err(Error::invalid("sweep rates must be non-empty and >= 1"));
    }
    let summary = cfg.out_dir.join("sweep.csv");
    let flush = |rows: &[SweepRow]| -> Result<()> {
        if write {
            create_dir(&cfg.out_dir)?;
            fs::write(&summary, sweep_csv(&cfg.ks, rows)).map_err(|e| Error::io(&summary, e))?;
        }
        Ok(())
    };
    let mut rows = Vec::with_capacity(rates.len());
    if parallel {
        let results: Vec<Result<SweepRow>> = std::thread::scope(|s| {
            let handles: Vec<_> = rates
                .iter()
                .map(|&r| s.spawn(move || sweep_leg(cfg, data, r, write)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::invalid("sweep leg panicked"))))
                .collect()
        });
        let mut first_err = None;
        for r in results {
            match r {
                Ok(row) => rows.push(row),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        flush(&rows)?;
        if let Some(e) = first_err {
            return Err(e);
        }
    } else {
        for &r in rates {
            rows.push(sweep_leg(cfg, data, r, write)?);
            flush(&rows)?;
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationVariant {
    /// Titles in prompts, trainable item table.
    #[serde(rename = "BOTH")]
    Both,
    /// No titles, trainable item table.
    E,
    /// Titles in prompts, frozen item table.
    I,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 3] = [AblationVariant::Both, AblationVariant::E, AblationVariant::I];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Both => "BOTH",
            AblationVariant::E => "E",
            AblationVariant::I => "I",
        }
    }

    /// `cfg` with only the title and freeze switches changed.
    pub fn apply(self, cfg: &RunConfig) -> RunConfig {
        let mut c = cfg.clone();
        c.train.include_titles = self != AblationVariant::E;
        c.train.freeze_item_table = self == AblationVariant::I;
        c.out_dir = cfg.out_dir.join(self.name());
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub ks: Vec<usize>,
    pub variants: Vec<(AblationVariant, MetricReport)>,
}

impl AblationReport {
    pub fn get(&self, v: AblationVariant) -> Option<&MetricReport> {
        self.variants.iter().find(|(x, _)| *x == v).map(|(_, r)| r)
    }

    /// `variant,ng@K,hr@K,...` with one row per variant.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant");
        for k in &self.ks {
            s.push_str(&format!(",ng@{k},hr@{k}"));
        }
        s.push('\n');
        for (v, r) in &self.variants {
            s.push_str(v.name());
            for &k in &self.ks {
                s.push_str(&format!(",{},{}", r.ng(k), r.hr(k)));
            }
            s.push('\n');
        }
        s
    }
}

/// Train and evaluate the three variants on the same data.
pub fn run_ablation(cfg: &RunConfig, data: &Dataset, write: bool) -> Result<AblationReport> {
    let mut variants = Vec::with_capacity(3);
    for v in AblationVariant::ALL {
        let c = v.apply(cfg);
        let (ckpt, report) = train_and_evaluate(&c, data)?;
        if write {
            write_run(&c, data, &ckpt)?;
            RunMetrics::new(&c, report.clone()).write(&c.out_dir, "metrics")?;
        }
        variants.push((v, report));
    }
    let report = AblationReport {
        ks: cfg.ks.clone(),
        variants,
    };
    if write {
        let path = cfg.out_dir.join("ablation.csv");
        fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
        let path = cfg.out_dir.join("ablation.json");
        fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}
