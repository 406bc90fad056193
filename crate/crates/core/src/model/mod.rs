//! Desk-scale causal decoder.
//!
//! Pre-norm transformer blocks with GELU feed-forward and learned positions.
//! Token ids below `base_vocab` read the dense base table; ids above it are
//! items and read the hash-compressed item table. The output layer produces
//! `base_vocab + item_count` logits; with a tied item head the trailing item
//! logits are inner products with the compressed item embeddings.
//!
//! Sequences are packed row-wise into one matrix so the dense layers run as
//! single matrix products; attention runs per sequence.

mod config;
mod lora;
mod ops;
mod params;

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::ModelConfig;
pub use lora::{apply_lora, Adapters, LoraAdapter, LoraTarget, Projection};
pub use params::{Block, ParamGroup, Params, TensorMut, TensorRef};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::tokenizer::TokenId;
use ops::{causal_softmax, causal_softmax_backward, gelu, gelu_grad, layer_norm, layer_norm_backward, LnCache};

/// Which parameter groups receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    on: [bool; 9],
}

impl Trainable {
    pub fn all() -> Self {
        Trainable { on: [true; 9] }
    }

    pub fn none() -> Self {
        Trainable { on: [false; 9] }
    }

    pub fn with(mut self, group: ParamGroup, on: bool) -> Self {
        self.on[group as usize] = on;
        self
    }

    pub fn contains(&self, group: ParamGroup) -> bool {
        self.on[group as usize]
    }
}

/// Summed cross-entropy and the number of positions it covers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossSummary {
    pub sum: f64,
    pub count: usize,
}

impl LossSummary {
    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    pub fn merge(&mut self, other: LossSummary) {
        self.sum += other.sum;
        self.count += other.count;
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    offset: usize,
    len: usize,
}

struct BlockCache<F> {
    ln1: LnCache<F>,
    h1: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    /// `x A^T` per projection, present when adapters are active.
    mids: [Option<Array2<F>>; 4],
    probs: Vec<Array2<F>>,
    c: Array2<F>,
    ln2: LnCache<F>,
    h2: Array2<F>,
    u: Array2<F>,
    g: Array2<F>,
}

/// Final hidden states, sequence boundaries and, when kept, the backward cache.
type Run<F> = (Array2<F>, Vec<Segment>, Option<Cache<F>>);

struct Cache<F> {
    blocks: Vec<BlockCache<F>>,
    lnf: LnCache<F>,
}

pub struct Model<F> {
    pub config: ModelConfig,
    pub params: Params<F>,
    passes: AtomicU64,
}

impl<F: Float> Clone for Model<F> {
    fn clone(&self) -> Self {
        Model {
            config: self.config.clone(),
            params: self.params.clone(),
            passes: AtomicU64::new(0),
        }
    }
}

impl<F: Float> std::fmt::Debug for Model<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model").field("config", &self.config).finish_non_exhaustive()
    }
}

fn project<F: Float>(
    x: &Array2<F>,
    w: &Array2<F>,
    lora: Option<&LoraAdapter<F>>,
) -> (Array2<F>, Option<Array2<F>>) {
    let mut y = x.dot(&w.t());
    let mid = lora.map(|ad| {
        let mid = x.dot(&ad.a.t());
        general_mat_mul(ad.scale(), &mid, &ad.b.t(), F::one(), &mut y);
        mid
    });
    (y, mid)
}

fn project_backward<F: Float>(
    dy: &Array2<F>,
    x: &Array2<F>,
    w: &Array2<F>,
    lora: Option<(&LoraAdapter<F>, &Array2<F>)>,
    dw: Option<&mut Array2<F>>,
    dlora: Option<&mut LoraAdapter<F>>,
) -> Array2<F> {
    if let Some(dw) = dw {
        general_mat_mul(F::one(), &dy.t(), x, F::one(), dw);
    }
    let mut dx = dy.dot(w);
    if let Some((ad, mid)) = lora {
        let scale = ad.scale();
        let dmid = dy.dot(&ad.b) * scale;
        if let Some(g) = dlora {
            general_mat_mul(scale, &dy.t(), mid, F::one(), &mut g.b);
            general_mat_mul(F::one(), &dmid.t(), x, F::one(), &mut g.a);
        }
        general_mat_mul(F::one(), &dmid, &ad.a, F::one(), &mut dx);
    }
    dx
}

impl<F: Float> Model<F> {
    /// Fresh model; `init_seed` drives dense initialization, `hash_seed` the
    /// item table's hash functions and rows.
    pub fn new(config: ModelConfig, init_seed: u64, hash_seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let params = Params::init(&config, &mut rng, hash_seed)?;
        Ok(Self::from_params(config, params))
    }

    pub fn from_params(config: ModelConfig, params: Params<F>) -> Self {
        Model {
            config,
            params,
            passes: AtomicU64::new(0),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size()
    }

    /// Forward passes run since construction or the last reset.
    pub fn forward_passes(&self) -> u64 {
        self.passes.load(Ordering::Relaxed)
    }

    pub fn reset_forward_passes(&self) {
        self.passes.store(0, Ordering::Relaxed);
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::invalid("empty token sequence"));
        }
        if tokens.len() > self.config.max_seq_len {
            return Err(Error::invalid(format!(
                "sequence of {} tokens exceeds max_seq_len {}",
                tokens.len(),
                self.config.max_seq_len
            )));
        }
        let v = self.vocab_size();
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= v) {
            return Err(Error::OutOfRange {
                what: "token",
                index: t as usize,
                size: v,
            });
        }
        Ok(())
    }

    /// Token embeddings without positions, one row per token.
    pub fn embed_tokens(&self, tokens: &[TokenId]) -> Result<Array2<F>> {
        let v = self.vocab_size();
        let mut out = Array2::zeros((tokens.len(), self.config.dim));
        for (&tok, row) in tokens.iter().zip(out.outer_iter_mut()) {
            if tok as usize >= v {
                return Err(Error::OutOfRange {
                    what: "token",
                    index: tok as usize,
                    size: v,
                });
            }
            self.embed_into(tok, row);
        }
        Ok(out)
    }

    fn embed_into(&self, tok: TokenId, mut row: ndarray::ArrayViewMut1<F>) {
        let t = tok as usize;
        let base = self.config.base_vocab;
        if t < base {
            row.assign(&self.params.base_embed.row(t));
        } else {
            self.params
                .items
                .embed_into(t - base, row)
                .expect("token range checked");
        }
    }

    fn run(
        &self,
        adapters: Option<&Adapters<F>>,
        seqs: &[&[TokenId]],
        keep: bool,
    ) -> Result<Run<F>> {
        if let Some(a) = adapters {
            if a.entries.len() != self.config.layers * 4 {
                return Err(Error::Shape(format!(
                    "{} adapters for {} layers",
                    a.entries.len(),
                    self.config.layers
                )));
            }
        }
        let mut segs = Vec::with_capacity(seqs.len());
        let mut n = 0;
        for s in seqs {
            self.check_tokens(s)?;
            segs.push(Segment {
                offset: n,
                len: s.len(),
            });
            n += s.len();
        }
        self.passes.fetch_add(seqs.len() as u64, Ordering::Relaxed);

        let d = self.config.dim;
        let mut x = Array2::zeros((n, d));
        for (seg, s) in segs.iter().zip(seqs) {
            for (t, &tok) in s.iter().enumerate() {
                let mut row = x.row_mut(seg.offset + t);
                self.embed_into(tok, row.view_mut());
                row += &self.params.pos_embed.row(t);
            }
        }

        let mut caches = Vec::new();
        for l in 0..self.config.layers {
            let (next, cache) = self.block_forward(l, x, &segs, adapters);
            x = next;
            if keep {
                caches.push(cache);
            }
        }
        let (hf, lnf) = layer_norm(&x, &self.params.lnf_g, &self.params.lnf_b);
        let cache = keep.then_some(Cache {
            blocks: caches,
            lnf,
        });
        Ok((hf, segs, cache))
    }

    fn block_forward(
        &self,
        l: usize,
        x: Array2<F>,
        segs: &[Segment],
        adapters: Option<&Adapters<F>>,
    ) -> (Array2<F>, BlockCache<F>) {
        let b = &self.params.blocks[l];
        let ad = |p: Projection| adapters.map(|a| a.get(l, p));
        let (h1, ln1) = layer_norm(&x, &b.ln1_g, &b.ln1_b);
        let (q, mq) = project(&h1, &b.wq, ad(Projection::Q));
        let (k, mk) = project(&h1, &b.wk, ad(Projection::K));
        let (v, mv) = project(&h1, &b.wv, ad(Projection::V));

        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());
        let mut c = Array2::zeros(x.dim());
        let mut probs = Vec::with_capacity(segs.len() * heads);
        for seg in segs {
            let rows = seg.offset..seg.offset + seg.len;
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = q.slice(s![rows.clone(), cols.clone()]);
                let kh = k.slice(s![rows.clone(), cols.clone()]);
                let vh = v.slice(s![rows.clone(), cols.clone()]);
                let mut p = qh.dot(&kh.t());
                p *= scale;
                causal_softmax(p.view_mut());
                c.slice_mut(s![rows.clone(), cols]).assign(&p.dot(&vh));
                probs.push(p);
            }
        }
        let (o, mo) = project(&c, &b.wo, ad(Projection::O));
        let x1 = x + &o;
        let (h2, ln2) = layer_norm(&x1, &b.ln2_g, &b.ln2_b);
        let mut u = h2.dot(&b.w1.t());
        u += &b.b1;
        let g = u.mapv(gelu);
        let mut f = g.dot(&b.w2.t());
        f += &b.b2;
        let x2 = x1 + &f;
        (
            x2,
            BlockCache {
                ln1,
                h1,
                q,
                k,
                v,
                mids: [mq, mk, mv, mo],
                probs,
                c,
                ln2,
                h2,
                u,
                g,
            },
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn block_backward(
        &self,
        l: usize,
        cache: &BlockCache<F>,
        dx: Array2<F>,
        segs: &[Segment],
        adapters: Option<&Adapters<F>>,
        grads: &mut Params<F>,
        mut agrads: Option<&mut Adapters<F>>,
        tr: &Trainable,
    ) -> Array2<F> {
        let b = &self.params.blocks[l];
        let gb = &mut grads.blocks[l];
        let ffn = tr.contains(ParamGroup::FeedForward);
        let norm = tr.contains(ParamGroup::Norm);
        let attn = tr.contains(ParamGroup::Attention);

        if ffn {
            general_mat_mul(F::one(), &dx.t(), &cache.g, F::one(), &mut gb.w2);
            gb.b2 += &dx.sum_axis(Axis(0));
        }
        let mut du = dx.dot(&b.w2);
        du.zip_mut_with(&cache.u, |d, &u| *d *= gelu_grad(u));
        if ffn {
            general_mat_mul(F::one(), &du.t(), &cache.h2, F::one(), &mut gb.w1);
            gb.b1 += &du.sum_axis(Axis(0));
        }
        let dh2 = du.dot(&b.w1);
        let (g2, b2) = (&mut gb.ln2_g, &mut gb.ln2_b);
        let mut dx1 = layer_norm_backward(&dh2, &cache.ln2, &b.ln2_g, norm.then_some(g2), norm.then_some(b2));
        dx1 += &dx;

        let lora = |p: Projection| {
            adapters.map(|a| (a.get(l, p), cache.mids[p as usize].as_ref().expect("adapter cache")))
        };
        let dc = project_backward(
            &dx1,
            &cache.c,
            &b.wo,
            lora(Projection::O),
            attn.then_some(&mut gb.wo),
            agrads.as_deref_mut().map(|a| &mut a.entries[l * 4 + Projection::O as usize]),
        );

        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());
        let mut dq = Array2::zeros(dc.dim());
        let mut dk = Array2::zeros(dc.dim());
        let mut dv = Array2::zeros(dc.dim());
        let mut pi = cache.probs.iter();
        for seg in segs {
            let rows = seg.offset..seg.offset + seg.len;
            for h in 0..heads {
                let p = pi.next().expect("one prob matrix per segment and head");
                let idx = s![rows.clone(), h * dh..(h + 1) * dh];
                let dch = dc.slice(idx);
                let vh = cache.v.slice(idx);
                let mut dp = dch.dot(&vh.t());
                dv.slice_mut(idx).assign(&p.t().dot(&dch));
                causal_softmax_backward(p.view(), &mut dp);
                dp *= scale;
                dq.slice_mut(idx).assign(&dp.dot(&cache.k.slice(idx)));
                dk.slice_mut(idx).assign(&dp.t().dot(&cache.q.slice(idx)));
            }
        }

        let mut dh1 = project_backward(
            &dq,
            &cache.h1,
            &b.wq,
            lora(Projection::Q),
            attn.then_some(&mut gb.wq),
            agrads.as_deref_mut().map(|a| &mut a.entries[l * 4 + Projection::Q as usize]),
        );
        dh1 += &project_backward(
            &dk,
            &cache.h1,
            &b.wk,
            lora(Projection::K),
            attn.then_some(&mut gb.wk),
            agrads.as_deref_mut().map(|a| &mut a.entries[l * 4 + Projection::K as usize]),
        );
        dh1 += &project_backward(
            &dv,
            &cache.h1,
            &b.wv,
            lora(Projection::V),
            attn.then_some(&mut gb.wv),
            agrads.map(|a| &mut a.entries[l * 4 + Projection::V as usize]),
        );
        let (g1, b1) = (&mut gb.ln1_g, &mut gb.ln1_b);
        let mut dx0 = layer_norm_backward(&dh1, &cache.ln1, &b.ln1_g, norm.then_some(g1), norm.then_some(b1));
        dx0 += &dx1;
        dx0
    }

    /// Item logits for each row of `h`, `rows x item_count`.
    fn item_scores(&self, h: ArrayView2<F>) -> Array2<F> {
        match &self.params.head_item {
            Some(w) => h.dot(&w.t()),
            None => {
                // Project onto the shared rows once, then average per item.
                let items = &self.params.items;
                let z = h.dot(&items.shared().t());
                let k = items.k();
                let kf = F::from_f64(k as f64);
                let mut out = Array2::zeros((h.nrows(), items.item_count()));
                for (zr, mut or) in z.outer_iter().zip(out.outer_iter_mut()) {
                    for (i, o) in or.iter_mut().enumerate() {
                        let codes = items.codes(i).expect("item in range");
                        let mut acc = F::zero();
                        for &c in codes {
                            acc += zr[c as usize];
                        }
                        *o = acc / kf;
                    }
                }
                out
            }
        }
    }

    fn item_scores_backward(
        &self,
        dl: ArrayView2<F>,
        h: &Array2<F>,
        grads: &mut Params<F>,
        tr: &Trainable,
    ) -> Array2<F> {
        match (&self.params.head_item, &mut grads.head_item) {
            (Some(w), Some(gw)) => {
                if tr.contains(ParamGroup::HeadItem) {
                    general_mat_mul(F::one(), &dl.t(), h, F::one(), gw);
                }
                dl.dot(w)
            }
            _ => {
                let items = &self.params.items;
                let inv_k = F::one() / F::from_f64(items.k() as f64);
                let mut dz = Array2::zeros((dl.nrows(), items.rows()));
                for (dr, mut zr) in dl.outer_iter().zip(dz.outer_iter_mut()) {
                    for (i, &g) in dr.iter().enumerate() {
                        let gk = g * inv_k;
                        for &c in items.codes(i).expect("item in range") {
                            zr[c as usize] += gk;
                        }
                    }
                }
                if tr.contains(ParamGroup::ItemTable) {
                    general_mat_mul(F::one(), &dz.t(), h, F::one(), grads.items.shared_mut());
                }
                dz.dot(items.shared())
            }
        }
    }

    /// Full-vocabulary logits for each row of `h`.
    fn head(&self, h: ArrayView2<F>) -> Array2<F> {
        let base = self.config.base_vocab;
        let mut out = Array2::zeros((h.nrows(), self.vocab_size()));
        out.slice_mut(s![.., ..base]).assign(&h.dot(&self.params.head_base.t()));
        out.slice_mut(s![.., base..]).assign(&self.item_scores(h));
        out
    }

    /// Logits at every position of one sequence, `len x (base_vocab + item_count)`.
    pub fn forward(&self, adapters: Option<&Adapters<F>>, tokens: &[TokenId]) -> Result<Array2<F>> {
        let (hf, _, _) = self.run(adapters, &[tokens], false)?;
        Ok(self.head(hf.view()))
    }

    /// Logits at the final position only; one forward pass.
    pub fn last_logits(&self, adapters: Option<&Adapters<F>>, tokens: &[TokenId]) -> Result<Array1<F>> {
        let (hf, _, _) = self.run(adapters, &[tokens], false)?;
        let last = hf.slice(s![hf.nrows() - 1.., ..]);
        Ok(self.head(last).row(0).to_owned())
    }

    /// Greedy continuation of `prompt` by `steps` tokens, one pass per token.
    pub fn greedy_decode(
        &self,
        adapters: Option<&Adapters<F>>,
        prompt: &[TokenId],
        steps: usize,
    ) -> Result<Vec<TokenId>> {
        let mut seq = prompt.to_vec();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let logits = self.last_logits(adapters, &seq)?;
            let next = argmax(logits.view()) as TokenId;
            out.push(next);
            seq.push(next);
        }
        Ok(out)
    }

    /// Forward-only loss over a batch of `(tokens, loss_mask)` pairs.
    pub fn batch_loss(
        &self,
        adapters: Option<&Adapters<F>>,
        batch: &[(&[TokenId], &[bool])],
    ) -> Result<LossSummary> {
        let seqs: Vec<&[TokenId]> = batch.iter().map(|b| b.0).collect();
        let (hf, segs, _) = self.run(adapters, &seqs, false)?;
        let (rows, targets) = select_rows(batch, &segs)?;
        let logits = self.head(hf.select(Axis(0), &rows).view());
        let mut total = LossSummary::default();
        for (row, &t) in logits.outer_iter().zip(&targets) {
            total.sum += cross_entropy(row, t as usize);
            total.count += 1;
        }
        Ok(total)
    }

    /// Mean next-token loss over all masked positions of the batch, with
    /// gradients of that mean accumulated into `grads` / `agrads`.
    pub fn loss_and_grad(
        &self,
        adapters: Option<&Adapters<F>>,
        batch: &[(&[TokenId], &[bool])],
        tr: &Trainable,
        grads: &mut Params<F>,
        mut agrads: Option<&mut Adapters<F>>,
    ) -> Result<LossSummary> {
        let seqs: Vec<&[TokenId]> = batch.iter().map(|b| b.0).collect();
        let (hf, segs, cache) = self.run(adapters, &seqs, true)?;
        let cache = cache.expect("cache requested");
        let (rows, targets) = select_rows(batch, &segs)?;
        let hsel = hf.select(Axis(0), &rows);
        let mut dlogits = self.head(hsel.view());

        let m = rows.len();
        let inv_m = F::from_f64(1.0 / m as f64);
        let mut loss = LossSummary::default();
        for (mut row, &t) in dlogits.outer_iter_mut().zip(&targets) {
            loss.sum += cross_entropy(row.view(), t as usize);
            loss.count += 1;
            let mx = row.fold(row[0], |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - mx).exp());
            let inv = inv_m / row.sum();
            row.mapv_inplace(|v| v * inv);
            row[t as usize] -= inv_m;
        }

        let base = self.config.base_vocab;
        let dl_base = dlogits.slice(s![.., ..base]);
        let dl_item = dlogits.slice(s![.., base..]);
        if tr.contains(ParamGroup::HeadBase) {
            general_mat_mul(F::one(), &dl_base.t(), &hsel, F::one(), &mut grads.head_base);
        }
        let mut dhsel = dl_base.dot(&self.params.head_base);
        dhsel += &self.item_scores_backward(dl_item, &hsel, grads, tr);

        let mut dhf = Array2::zeros(hf.dim());
        for (j, &r) in rows.iter().enumerate() {
            dhf.row_mut(r).assign(&dhsel.row(j));
        }
        let norm = tr.contains(ParamGroup::Norm);
        let mut dx = layer_norm_backward(
            &dhf,
            &cache.lnf,
            &self.params.lnf_g,
            norm.then_some(&mut grads.lnf_g),
            norm.then_some(&mut grads.lnf_b),
        );
        for l in (0..self.config.layers).rev() {
            dx = self.block_backward(
                l,
                &cache.blocks[l],
                dx,
                &segs,
                adapters,
                grads,
                agrads.as_deref_mut(),
                tr,
            );
        }

        let base_tr = tr.contains(ParamGroup::BaseEmbed);
        let item_tr = tr.contains(ParamGroup::ItemTable);
        let pos_tr = tr.contains(ParamGroup::Position);
        for (seg, s) in segs.iter().zip(&seqs) {
            for (t, &tok) in s.iter().enumerate() {
                let g = dx.row(seg.offset + t);
                if pos_tr {
                    let mut p = grads.pos_embed.row_mut(t);
                    p += &g;
                }
                let tok = tok as usize;
                if tok < base {
                    if base_tr {
                        let mut e = grads.base_embed.row_mut(tok);
                        e += &g;
                    }
                } else if item_tr {
                    self.params
                        .items
                        .accumulate_gradient(tok - base, g, grads.items.shared_mut())?;
                }
            }
        }
        Ok(loss)
    }
}

fn select_rows(batch: &[(&[TokenId], &[bool])], segs: &[Segment]) -> Result<(Vec<usize>, Vec<TokenId>)> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for ((tokens, mask), seg) in batch.iter().zip(segs) {
        if mask.len() != tokens.len() {
            return Err(Error::Shape(format!(
                "loss mask length {} differs from sequence length {}",
                mask.len(),
                tokens.len()
            )));
        }
        for t in 1..tokens.len() {
            if mask[t] {
                rows.push(seg.offset + t - 1);
                targets.push(tokens[t]);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid("loss mask covers no position"));
    }
    Ok((rows, targets))
}

/// `logsumexp(row) - row[target]`, accumulated in f64.
pub(crate) fn cross_entropy<F: Float>(row: ArrayView1<F>, target: usize) -> f64 {
    let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b.to_f64()));
    let sum: f64 = row.iter().map(|&v| (v.to_f64() - mx).exp()).sum();
    mx + sum.ln() - row[target].to_f64()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<F: Float>(v: ArrayView1<F>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// The trailing `item_count` entries of a full logits vector; entry `j` is item `j`.
pub fn item_logits<F>(logits: ArrayView1<'_, F>, item_count: usize) -> ArrayView1<'_, F> {
    let n = logits.len();
    logits.slice_move(s![n - item_count.min(n)..])
}

/// Items by descending score, ties by ascending index, truncated to `k`.
pub fn rank_items<F: Float>(scores: ArrayView1<F>, k: usize) -> Vec<(usize, F)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx.into_iter().map(|i| (i, scores[i])).collect()
}

/// One forward pass over `prompt`; items ranked from the final position.
pub fn recommend_top_k<F: Float>(
    model: &Model<F>,
    adapters: Option<&Adapters<F>>,
    prompt: &[TokenId],
    k: usize,
) -> Result<Vec<(usize, F)>> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let logits = model.last_logits(adapters, prompt)?;
    Ok(rank_items(item_logits(logits.view(), model.config.item_count), k))
}
