//! Parameter storage and named traversal.

use ndarray::{Array, Array1, Array2, Dimension};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::Result;
use crate::float::Float;
use crate::item_table::CompressedItemTable;

/// Coarse parameter groups used for freezing and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    BaseEmbed,
    ItemTable,
    Position,
    Attention,
    FeedForward,
    Norm,
    HeadBase,
    HeadItem,
    Lora,
}

pub struct TensorRef<'a, F> {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub data: &'a [F],
}

impl<'a, F: Float> TensorRef<'a, F> {
    pub(crate) fn new<D: Dimension>(name: String, group: ParamGroup, a: &'a Array<F, D>) -> Self {
        TensorRef {
            name,
            group,
            shape: a.shape().to_vec(),
            data: a.as_slice().expect("parameters are contiguous"),
        }
    }
}

pub struct TensorMut<'a, F> {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub data: &'a mut [F],
}

impl<'a, F: Float> TensorMut<'a, F> {
    pub(crate) fn new<D: Dimension>(name: String, group: ParamGroup, a: &'a mut Array<F, D>) -> Self {
        let shape = a.shape().to_vec();
        TensorMut {
            name,
            group,
            shape,
            data: a.as_slice_mut().expect("parameters are contiguous"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block<F> {
    pub ln1_g: Array1<F>,
    pub ln1_b: Array1<F>,
    /// Projections are stored `out x in`.
    pub wq: Array2<F>,
    pub wk: Array2<F>,
    pub wv: Array2<F>,
    pub wo: Array2<F>,
    pub ln2_g: Array1<F>,
    pub ln2_b: Array1<F>,
    pub w1: Array2<F>,
    pub b1: Array1<F>,
    pub w2: Array2<F>,
    pub b2: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    pub base_embed: Array2<F>,
    pub items: CompressedItemTable<F>,
    pub pos_embed: Array2<F>,
    pub blocks: Vec<Block<F>>,
    pub lnf_g: Array1<F>,
    pub lnf_b: Array1<F>,
    pub head_base: Array2<F>,
    /// Present only when the item head is untied.
    pub head_item: Option<Array2<F>>,
}

fn normal<F: Float, R: Rng>(rng: &mut R, shape: (usize, usize), std: f64) -> Array2<F> {
    let dist = Normal::new(0.0, std).expect("valid std");
    Array2::from_shape_simple_fn(shape, || F::from_f64(dist.sample(rng)))
}

impl<F: Float> Params<F> {
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R, hash_seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let std = 0.02;
        let resid_std = std / (2.0 * config.layers as f64).sqrt();
        let items = CompressedItemTable::build_with_prime(
            config.item_count,
            d,
            config.rate,
            config.k,
            hash_seed,
            config.hash_prime,
        )?;
        let base_embed = normal(rng, (config.base_vocab, d), std);
        let pos_embed = normal(rng, (config.max_seq_len, d), std);
        let blocks = (0..config.layers)
            .map(|_| Block {
                ln1_g: Array1::ones(d),
                ln1_b: Array1::zeros(d),
                wq: normal(rng, (d, d), std),
                wk: normal(rng, (d, d), std),
                wv: normal(rng, (d, d), std),
                wo: normal(rng, (d, d), resid_std),
                ln2_g: Array1::ones(d),
                ln2_b: Array1::zeros(d),
                w1: normal(rng, (config.ff_dim, d), std),
                b1: Array1::zeros(config.ff_dim),
                w2: normal(rng, (d, config.ff_dim), resid_std),
                b2: Array1::zeros(d),
            })
            .collect();
        let head_base = normal(rng, (config.base_vocab, d), std);
        let head_item = (!config.tied_item_head).then(|| normal(rng, (config.item_count, d), std));
        Ok(Params {
            base_embed,
            items,
            pos_embed,
            blocks,
            lnf_g: Array1::ones(d),
            lnf_b: Array1::zeros(d),
            head_base,
            head_item,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.fill(F::zero());
        }
        z
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_, F>> {
        use ParamGroup::*;
        let mut v = vec![
            TensorRef::new("base_embed".into(), BaseEmbed, &self.base_embed),
            TensorRef::new("item_table.shared".into(), ItemTable, self.items.shared()),
            TensorRef::new("pos_embed".into(), Position, &self.pos_embed),
        ];
        for (l, b) in self.blocks.iter().enumerate() {
            let p = |s: &str| format!("blocks.{l}.{s}");
            v.extend([
                TensorRef::new(p("ln1.gain"), Norm, &b.ln1_g),
                TensorRef::new(p("ln1.bias"), Norm, &b.ln1_b),
                TensorRef::new(p("attn.wq"), Attention, &b.wq),
                TensorRef::new(p("attn.wk"), Attention, &b.wk),
                TensorRef::new(p("attn.wv"), Attention, &b.wv),
                TensorRef::new(p("attn.wo"), Attention, &b.wo),
                TensorRef::new(p("ln2.gain"), Norm, &b.ln2_g),
                TensorRef::new(p("ln2.bias"), Norm, &b.ln2_b),
                TensorRef::new(p("ff.w1"), FeedForward, &b.w1),
                TensorRef::new(p("ff.b1"), FeedForward, &b.b1),
                TensorRef::new(p("ff.w2"), FeedForward, &b.w2),
                TensorRef::new(p("ff.b2"), FeedForward, &b.b2),
            ]);
        }
        v.push(TensorRef::new("lnf.gain".into(), Norm, &self.lnf_g));
        v.push(TensorRef::new("lnf.bias".into(), Norm, &self.lnf_b));
        v.push(TensorRef::new("head_base".into(), HeadBase, &self.head_base));
        if let Some(h) = &self.head_item {
            v.push(TensorRef::new("head_item".into(), HeadItem, h));
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, F>> {
        use ParamGroup::*;
        let mut v = vec![
            TensorMut::new("base_embed".into(), BaseEmbed, &mut self.base_embed),
            TensorMut::new("item_table.shared".into(), ItemTable, self.items.shared_mut()),
            TensorMut::new("pos_embed".into(), Position, &mut self.pos_embed),
        ];
        for (l, b) in self.blocks.iter_mut().enumerate() {
            let p = |s: &str| format!("blocks.{l}.{s}");
            v.extend([
                TensorMut::new(p("ln1.gain"), Norm, &mut b.ln1_g),
                TensorMut::new(p("ln1.bias"), Norm, &mut b.ln1_b),
                TensorMut::new(p("attn.wq"), Attention, &mut b.wq),
                TensorMut::new(p("attn.wk"), Attention, &mut b.wk),
                TensorMut::new(p("attn.wv"), Attention, &mut b.wv),
                TensorMut::new(p("attn.wo"), Attention, &mut b.wo),
                TensorMut::new(p("ln2.gain"), Norm, &mut b.ln2_g),
                TensorMut::new(p("ln2.bias"), Norm, &mut b.ln2_b),
                TensorMut::new(p("ff.w1"), FeedForward, &mut b.w1),
                TensorMut::new(p("ff.b1"), FeedForward, &mut b.b1),
                TensorMut::new(p("ff.w2"), FeedForward, &mut b.w2),
                TensorMut::new(p("ff.b2"), FeedForward, &mut b.b2),
            ]);
        }
        v.push(TensorMut::new("lnf.gain".into(), Norm, &mut self.lnf_g));
        v.push(TensorMut::new("lnf.bias".into(), Norm, &mut self.lnf_b));
        v.push(TensorMut::new("head_base".into(), HeadBase, &mut self.head_base));
        if let Some(h) = &mut self.head_item {
            v.push(TensorMut::new("head_item".into(), HeadItem, h));
        }
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }
}
