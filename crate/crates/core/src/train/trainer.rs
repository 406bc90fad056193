use serde::{Deserialize, Serialize};

use super::optim::Adam;
use crate::catalog::ItemCatalog;
use crate::error::{Error, Result};
use crate::model::{Adapters, LossSummary, Model, ParamGroup, Trainable};
use crate::prompt::{LossScope, PromptEncoder, PromptSample};
use crate::seed;
use crate::tokenizer::{BaseTokenizer, TokenId, BOS, EOS};
use rand::seq::SliceRandom;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    Full,
    /// Frozen backbone with low-rank adapters on the attention projections.
    Lora,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub mode: TrainMode,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub freeze_item_table: bool,
    pub include_titles: bool,
    pub loss_scope: LossScope,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; zero disables clipping.
    pub grad_clip: f64,
    /// Merge samples whose prompts extend one another into a single sequence.
    pub sample_packing: bool,
    /// Epochs of title-only language modelling before adapter finetuning.
    pub pretrain_epochs: usize,
    pub pretrain_learning_rate: f64,
    pub pretrain_corpus: PretrainCorpus,
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 10,
            mode: TrainMode::Full,
            lora_rank: 8,
            lora_alpha: 16.0,
            freeze_item_table: false,
            include_titles: true,
            loss_scope: LossScope::All,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: 1.0,
            sample_packing: true,
            pretrain_epochs: 0,
            pretrain_learning_rate: 1e-3,
            pretrain_corpus: PretrainCorpus::TitleHistories,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::invalid("learning_rate must be positive and batch_size at least 1"));
        }
        if self.mode == TrainMode::Lora && (self.lora_rank == 0 || !(self.lora_alpha > 0.0)) {
            return Err(Error::invalid("lora mode needs a positive rank and alpha"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::invalid("optimizer betas must lie in [0, 1) and eps be positive"));
        }
        Ok(())
    }
}

/// Parameter groups updated under `cfg`.
pub fn trainable_groups(cfg: &TrainConfig) -> Trainable {
    use ParamGroup::*;
    let t = match cfg.mode {
        TrainMode::Full => Trainable::all().with(Lora, false),
        TrainMode::Lora => Trainable::none().with(Lora, true).with(ItemTable, true).with(HeadItem, true),
    };
    t.with(ItemTable, !cfg.freeze_item_table)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainExample {
    pub tokens: Vec<TokenId>,
    pub loss_mask: Vec<bool>,
}

fn extends(prev: &PromptSample, next: &PromptSample) -> bool {
    next.history.len() == prev.history.len() + 1
        && next.history.starts_with(&prev.history)
        && next.history[prev.history.len()] == prev.target
}

/// Encode samples for training.
///
/// With packing, a run of samples where each prompt is the previous prompt
/// plus the previous target becomes one sequence: the longest sample's
/// tokens, with the loss mask covering every member's target position (and
/// everything after position 0 under [`LossScope::All`]).
pub fn encode_training_set(
    encoder: &PromptEncoder,
    samples: &[PromptSample],
    packing: bool,
    scope: LossScope,
) -> Result<Vec<TrainExample>> {
    if !packing {
        return samples
            .iter()
            .map(|s| {
                let e = encoder.encode(s)?;
                Ok(TrainExample {
                    tokens: e.tokens,
                    loss_mask: e.loss_mask,
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < samples.len() {
        let mut end = start + 1;
        while end < samples.len() && extends(&samples[end - 1], &samples[end]) {
            end += 1;
        }
        let last = encoder.encode(&samples[end - 1])?;
        let mut mask = last.loss_mask;
        if scope == LossScope::OutputOnly {
            for s in &samples[start..end - 1] {
                mask[encoder.encode_prompt(&s.history)?.len()] = true;
            }
        }
        out.push(TrainExample {
            tokens: last.tokens,
            loss_mask: mask,
        });
        start = end;
    }
    Ok(out)
}

/// Text used to pretrain the backbone before adapter finetuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainCorpus {
    /// Each catalog title on its own.
    Titles,
    /// Training histories written out as their items' titles.
    #[default]
    TitleHistories,
}

/// `BOS title_1 ... title_n EOS` for each packed run of training samples
/// (history followed by target), loss on all but the first token.
pub fn title_history_corpus(
    tok: &BaseTokenizer,
    catalog: &ItemCatalog,
    samples: &[PromptSample],
) -> Result<Vec<TrainExample>> {
    let titles: Vec<Vec<TokenId>> = catalog.titles().map(|t| tok.encode(t)).collect();
    let title = |i: usize| {
        titles.get(i).ok_or(Error::OutOfRange {
            what: "item",
            index: i,
            size: titles.len(),
        })
    };
    let mut out = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if samples.get(i + 1).is_some_and(|next| extends(s, next)) {
            continue;
        }
        let mut tokens = vec![BOS];
        for &item in s.history.iter().chain(std::iter::once(&s.target)) {
            tokens.extend_from_slice(title(item)?);
        }
        tokens.push(EOS);
        let loss_mask = (0..tokens.len()).map(|t| t > 0).collect();
        out.push(TrainExample { tokens, loss_mask });
    }
    Ok(out)
}

/// `BOS title EOS` for every catalog item, loss on all but the first token.
pub fn title_corpus(tok: &BaseTokenizer, catalog: &ItemCatalog) -> Vec<TrainExample> {
    catalog
        .titles()
        .map(|t| {
            let mut tokens = vec![BOS];
            tokens.extend(tok.encode(t));
            tokens.push(EOS);
            let loss_mask = (0..tokens.len()).map(|i| i > 0).collect();
            TrainExample { tokens, loss_mask }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Model, adapters and optimizer state between steps.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model<f32>,
    pub adapters: Option<Adapters<f32>>,
    pub optimizer: Adam,
    pub trainable: Trainable,
    pub step: usize,
    /// Completed epochs.
    pub epoch: usize,
    pub curve: Vec<CurvePoint>,
}

impl TrainState {
    /// Adapters, when `cfg` asks for them, are drawn from the `lora` substream of `cfg.seed`.
    pub fn new(model: Model<f32>, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adapters = match cfg.mode {
            TrainMode::Full => None,
            TrainMode::Lora => Some(Adapters::new(
                model.config.layers,
                model.config.dim,
                cfg.lora_rank,
                cfg.lora_alpha,
                &mut seed::rng(cfg.seed, "lora"),
            )?),
        };
        let mut sizes: Vec<usize> = model.params.tensors().iter().map(|t| t.data.len()).collect();
        if let Some(a) = &adapters {
            sizes.extend(a.tensors().iter().map(|t| t.data.len()));
        }
        Ok(TrainState {
            optimizer: Adam::new(cfg.beta1, cfg.beta2, cfg.eps, &sizes),
            trainable: trainable_groups(cfg),
            model,
            adapters,
            step: 0,
            epoch: 0,
            curve: Vec::new(),
        })
    }

    /// One optimizer update on the mean loss over all masked positions of `batch`.
    pub fn train_step(&mut self, batch: &[(&[TokenId], &[bool])], cfg: &TrainConfig) -> Result<f64> {
        let mut grads = self.model.params.zeros_like();
        let mut agrads = self.adapters.as_ref().map(Adapters::zeros_like);
        let loss = self.model.loss_and_grad(
            self.adapters.as_ref(),
            batch,
            &self.trainable,
            &mut grads,
            agrads.as_mut(),
        )?;
        let mean = loss.mean();
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                detail: format!("batch of {} sequences, {} target positions", batch.len(), loss.count),
            });
        }
        let mut params = self.model.params.tensors_mut();
        let mut g = grads.tensors();
        if let (Some(a), Some(ag)) = (self.adapters.as_mut(), agrads.as_ref()) {
            params.extend(a.tensors_mut());
            g.extend(ag.tensors());
        }
        let norm = self
            .optimizer
            .step(params, &g, &self.trainable, cfg.learning_rate, cfg.grad_clip)?;
        if !norm.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                detail: "gradient norm is not finite".into(),
            });
        }
        self.step += 1;
        Ok(mean)
    }

    /// Mean loss over every masked position in `data`.
    pub fn evaluate_loss(&self, data: &[TrainExample], batch_size: usize) -> Result<f64> {
        let mut total = LossSummary::default();
        for chunk in data.chunks(batch_size.max(1)) {
            let batch: Vec<(&[TokenId], &[bool])> =
                chunk.iter().map(|e| (e.tokens.as_slice(), e.loss_mask.as_slice())).collect();
            total.merge(self.model.batch_loss(self.adapters.as_ref(), &batch)?);
        }
        if total.count == 0 {
            return Err(Error::invalid("no examples to score"));
        }
        Ok(total.mean())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// State after the epoch with the lowest validation loss (the last epoch
    /// when there is no validation data).
    pub best: TrainState,
    pub best_val_loss: Option<f64>,
    pub last: TrainState,
}

/// Run epochs `state.epoch..cfg.max_epochs`, each over a seeded shuffle of
/// `train_set`, scoring `val_set` after every epoch.
pub fn train(
    mut state: TrainState,
    train_set: &[TrainExample],
    val_set: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let vocab = state.model.vocab_size();
    if let Some(bad) = train_set
        .iter()
        .chain(val_set)
        .flat_map(|e| e.tokens.iter())
        .find(|&&t| t as usize >= vocab)
    {
        return Err(Error::Mismatch(format!(
            "token {bad} outside the model vocabulary of {vocab}"
        )));
    }

    let mut best: Option<(f64, TrainState)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    'epochs: while state.epoch < cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(cfg.seed, &format!("train/epoch{}", state.epoch)));
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| state.step >= m) {
                break 'epochs;
            }
            let batch: Vec<(&[TokenId], &[bool])> = chunk
                .iter()
                .map(|&i| (train_set[i].tokens.as_slice(), train_set[i].loss_mask.as_slice()))
                .collect();
            let loss = state.train_step(&batch, cfg)?;
            state.curve.push(CurvePoint {
                step: state.step,
                train_loss: loss,
                val_loss: None,
            });
        }
        state.epoch += 1;
        if !val_set.is_empty() {
            let val = state.evaluate_loss(val_set, cfg.batch_size)?;
            if let Some(p) = state.curve.last_mut() {
                p.val_loss = Some(val);
            }
            log::info!("epoch {} step {} val_loss {val:.4}", state.epoch, state.step);
            if best.as_ref().is_none_or(|(b, _)| val < *b) {
                best = Some((val, state.clone()));
            }
        } else {
            log::info!("epoch {} step {}", state.epoch, state.step);
        }
    }
    Ok(match best {
        Some((val, mut b)) => {
            b.curve = state.curve.clone();
            TrainOutcome {
                best: b,
                best_val_loss: Some(val),
                last: state,
            }
        }
        None => TrainOutcome {
            best: state.clone(),
            best_val_loss: None,
            last: state,
        },
    })
}
