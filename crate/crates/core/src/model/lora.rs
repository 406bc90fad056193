//! Low-rank adapters on the attention projections.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamGroup, TensorMut, TensorRef};
use crate::error::{Error, Result};
use crate::float::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    Q,
    K,
    V,
    O,
}

impl Projection {
    pub const ALL: [Projection; 4] = [Projection::Q, Projection::K, Projection::V, Projection::O];

    pub fn name(self) -> &'static str {
        match self {
            Projection::Q => "wq",
            Projection::K => "wk",
            Projection::V => "wv",
            Projection::O => "wo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoraTarget {
    pub layer: usize,
    pub proj: Projection,
}

/// `W x + (alpha / r) * B (A x)` with `A: r x in`, `B: out x r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter<F> {
    pub target: LoraTarget,
    pub rank: usize,
    pub alpha: f64,
    pub a: Array2<F>,
    pub b: Array2<F>,
}

impl<F: Float> LoraAdapter<F> {
    /// `A` uniform in +-1/sqrt(in); `B` zero so the adapter starts inert.
    pub fn new<R: Rng>(
        target: LoraTarget,
        in_dim: usize,
        out_dim: usize,
        rank: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        LoraAdapter {
            target,
            rank,
            alpha,
            a: Array2::from_shape_simple_fn((rank, in_dim), || {
                F::from_f64(rng.random_range(-bound..bound))
            }),
            b: Array2::zeros((out_dim, rank)),
        }
    }

    pub fn scale(&self) -> F {
        F::from_f64(self.alpha / self.rank as f64)
    }
}

/// Single-vector adapted projection.
pub fn apply_lora<F: Float>(
    w: ArrayView2<F>,
    adapter: &LoraAdapter<F>,
    x: ArrayView1<F>,
) -> Result<Array1<F>> {
    let (out, inp) = w.dim();
    if x.len() != inp || adapter.a.dim() != (adapter.rank, inp) || adapter.b.dim() != (out, adapter.rank)
    {
        return Err(Error::Shape(format!(
            "W {:?}, A {:?}, B {:?}, x {}",
            w.dim(),
            adapter.a.dim(),
            adapter.b.dim(),
            x.len()
        )));
    }
    let delta = adapter.b.dot(&adapter.a.dot(&x)) * adapter.scale();
    Ok(w.dot(&x) + delta)
}

/// One adapter per attention projection per layer, indexed `layer * 4 + proj`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapters<F> {
    pub rank: usize,
    pub alpha: f64,
    pub entries: Vec<LoraAdapter<F>>,
}

impl<F: Float> Adapters<F> {
    pub fn new<R: Rng>(layers: usize, dim: usize, rank: usize, alpha: f64, rng: &mut R) -> Result<Self> {
        if rank == 0 || !(alpha > 0.0) {
            return Err(Error::invalid("LoRA rank and alpha must be positive"));
        }
        let mut entries = Vec::with_capacity(layers * 4);
        for layer in 0..layers {
            for proj in Projection::ALL {
                entries.push(LoraAdapter::new(LoraTarget { layer, proj }, dim, dim, rank, alpha, rng));
            }
        }
        Ok(Adapters {
            rank,
            alpha,
            entries,
        })
    }

    pub fn get(&self, layer: usize, proj: Projection) -> &LoraAdapter<F> {
        &self.entries[layer * 4 + proj as usize]
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for e in &mut z.entries {
            e.a.fill(F::zero());
            e.b.fill(F::zero());
        }
        z
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_, F>> {
        let mut out = Vec::with_capacity(self.entries.len() * 2);
        for e in &self.entries {
            let base = format!("lora.blocks.{}.{}", e.target.layer, e.target.proj.name());
            out.push(TensorRef::new(format!("{base}.a"), ParamGroup::Lora, &e.a));
            out.push(TensorRef::new(format!("{base}.b"), ParamGroup::Lora, &e.b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, F>> {
        let mut out = Vec::with_capacity(self.entries.len() * 2);
        for e in &mut self.entries {
            let base = format!("lora.blocks.{}.{}", e.target.layer, e.target.proj.name());
            out.push(TensorMut::new(format!("{base}.a"), ParamGroup::Lora, &mut e.a));
            out.push(TensorMut::new(format!("{base}.b"), ParamGroup::Lora, &mut e.b));
        }
        out
    }
}
