//! Hash-compressed item embeddings.
//!
//! `|S|` shared rows back all `|I|` items. Each item is addressed by `k`
//! universal hash functions and its embedding is the mean of the addressed
//! rows, counted with multiplicity when two hashes collide.

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::hashing::{HashParams, DEFAULT_PRIME};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedItemTable<F> {
    shared: Array2<F>,
    hashes: Vec<HashParams>,
    item_count: usize,
    /// Row-major `item_count x k` cache of hash codes.
    codes: Vec<u32>,
}

/// Everything but the shared matrix, for persistence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableManifest {
    pub k: usize,
    pub rows: usize,
    pub dim: usize,
    pub p: u64,
    pub item_count: usize,
    pub hashes: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompressionStats {
    pub ratio: f64,
    pub parameter_count: usize,
}

/// `|S| = ceil(|I| / rate)`.
pub fn shared_rows_for_rate(item_count: usize, rate: f64) -> Result<usize> {
    if !(rate >= 1.0) || !rate.is_finite() {
        return Err(Error::invalid(format!("compression rate must be >= 1, got {rate}")));
    }
    if item_count == 0 {
        return Err(Error::invalid("item table needs at least one item"));
    }
    let rows = if rate.fract() == 0.0 && rate <= usize::MAX as f64 {
        item_count.div_ceil(rate as usize)
    } else {
        (item_count as f64 / rate).ceil() as usize
    };
    Ok(rows.clamp(1, item_count))
}

impl<F: Float> CompressedItemTable<F> {
    /// Sample `k` hash functions and a uniform(-1/sqrt(d), 1/sqrt(d)) table.
    pub fn build(item_count: usize, dim: usize, rate: f64, k: usize, seed: u64) -> Result<Self> {
        Self::build_with_prime(item_count, dim, rate, k, seed, DEFAULT_PRIME)
    }

    pub fn build_with_prime(
        item_count: usize,
        dim: usize,
        rate: f64,
        k: usize,
        seed: u64,
        prime: u64,
    ) -> Result<Self> {
        if dim == 0 || k == 0 {
            return Err(Error::invalid("item table needs dim >= 1 and k >= 1"));
        }
        let rows = shared_rows_for_rate(item_count, rate)?;
        let hashes = (0..k)
            .map(|j| HashParams::sample(seed::substream(seed, &format!("hash{j}")), prime, rows as u64))
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::substream(seed, "rows"));
        let scale = 1.0 / (dim as f64).sqrt();
        let shared = Array2::from_shape_simple_fn((rows, dim), || {
            F::from_f64(rng.random_range(-scale..scale))
        });
        Self::from_parts(shared, hashes, item_count)
    }

    pub fn from_parts(shared: Array2<F>, hashes: Vec<HashParams>, item_count: usize) -> Result<Self> {
        let rows = shared.nrows();
        if hashes.is_empty() {
            return Err(Error::invalid("item table needs at least one hash function"));
        }
        if rows == 0 || rows > item_count {
            return Err(Error::invalid(format!(
                "shared rows {rows} must lie in 1..={item_count}"
            )));
        }
        if let Some(h) = hashes.iter().find(|h| h.m != rows as u64) {
            return Err(Error::invalid(format!(
                "hash range {} differs from shared rows {rows}",
                h.m
            )));
        }
        let k = hashes.len();
        let mut codes = Vec::with_capacity(item_count * k);
        for i in 0..item_count {
            codes.extend(hashes.iter().map(|h| h.code(i as u64) as u32));
        }
        Ok(CompressedItemTable {
            shared: shared.as_standard_layout().into_owned(),
            hashes,
            item_count,
            codes,
        })
    }

    /// Uncompressed reference: one row per item via `a=1, b=0`.
    pub fn identity(shared: Array2<F>) -> Result<Self> {
        let n = shared.nrows();
        let h = HashParams::new(1, 0, DEFAULT_PRIME, n as u64)?;
        Self::from_parts(shared, vec![h], n)
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    pub fn rows(&self) -> usize {
        self.shared.nrows()
    }

    pub fn dim(&self) -> usize {
        self.shared.ncols()
    }

    pub fn k(&self) -> usize {
        self.hashes.len()
    }

    pub fn hashes(&self) -> &[HashParams] {
        &self.hashes
    }

    pub fn shared(&self) -> &Array2<F> {
        &self.shared
    }

    pub fn shared_mut(&mut self) -> &mut Array2<F> {
        &mut self.shared
    }

    fn check_item(&self, i: usize) -> Result<()> {
        if i >= self.item_count {
            return Err(Error::OutOfRange {
                what: "item",
                index: i,
                size: self.item_count,
            });
        }
        Ok(())
    }

    /// The `k` shared-row indices addressed by item `i`.
    pub fn codes(&self, i: usize) -> Result<&[u32]> {
        self.check_item(i)?;
        let k = self.k();
        Ok(&self.codes[i * k..(i + 1) * k])
    }

    pub fn item_embedding(&self, i: usize) -> Result<Array1<F>> {
        let mut out = Array1::zeros(self.dim());
        self.embed_into(i, out.view_mut())?;
        Ok(out)
    }

    /// Writes the mean of the addressed rows: summed in hash order, then
    /// divided by `k`.
    pub fn embed_into(&self, i: usize, mut out: ArrayViewMut1<F>) -> Result<()> {
        if out.len() != self.dim() {
            return Err(Error::Shape(format!(
                "embedding buffer has {} entries, table dim is {}",
                out.len(),
                self.dim()
            )));
        }
        out.fill(F::zero());
        for &c in self.codes(i)? {
            out += &self.shared.row(c as usize);
        }
        let k = F::from_f64(self.k() as f64);
        out.mapv_inplace(|v| v / k);
        Ok(())
    }

    /// All item embeddings stacked, `|I| x d`.
    pub fn materialize(&self) -> Array2<F> {
        let mut out = Array2::zeros((self.item_count, self.dim()));
        for (i, row) in out.axis_iter_mut(Axis(0)).enumerate() {
            self.embed_into(i, row).expect("index within item_count");
        }
        out
    }

    /// Adds `upstream / k` into `sink` at each row item `i` hashes to.
    pub fn accumulate_gradient(
        &self,
        i: usize,
        upstream: ArrayView1<F>,
        sink: &mut Array2<F>,
    ) -> Result<()> {
        if upstream.len() != self.dim() || sink.dim() != self.shared.dim() {
            return Err(Error::Shape(format!(
                "gradient shapes: upstream {}, sink {:?}, table {:?}",
                upstream.len(),
                sink.dim(),
                self.shared.dim()
            )));
        }
        let inv_k = F::one() / F::from_f64(self.k() as f64);
        for &c in self.codes(i)? {
            sink.row_mut(c as usize)
                .zip_mut_with(&upstream, |s, &u| *s += u * inv_k);
        }
        Ok(())
    }

    /// Scatter a full `|I| x d` gradient w.r.t. item embeddings into `sink`.
    pub fn accumulate_all(&self, d_items: &Array2<F>, sink: &mut Array2<F>) -> Result<()> {
        if d_items.nrows() != self.item_count {
            return Err(Error::Shape(format!(
                "expected {} item gradient rows, got {}",
                self.item_count,
                d_items.nrows()
            )));
        }
        for (i, row) in d_items.axis_iter(Axis(0)).enumerate() {
            self.accumulate_gradient(i, row, sink)?;
        }
        Ok(())
    }

    pub fn compression_stats(&self) -> CompressionStats {
        CompressionStats {
            ratio: self.item_count as f64 / self.rows() as f64,
            parameter_count: self.rows() * self.dim(),
        }
    }

    pub fn manifest(&self) -> TableManifest {
        TableManifest {
            k: self.k(),
            rows: self.rows(),
            dim: self.dim(),
            p: self.hashes[0].p,
            item_count: self.item_count,
            hashes: self.hashes.iter().map(|h| (h.a, h.b)).collect(),
        }
    }

    pub fn from_manifest(manifest: &TableManifest, shared: Array2<F>) -> Result<Self> {
        if shared.dim() != (manifest.rows, manifest.dim) || manifest.hashes.len() != manifest.k {
            return Err(Error::Mismatch("item table manifest disagrees with data".into()));
        }
        let hashes = manifest
            .hashes
            .iter()
            .map(|&(a, b)| HashParams::new(a, b, manifest.p, manifest.rows as u64))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(shared, hashes, manifest.item_count)
    }

    /// Zero matrix shaped like the shared table, for gradient buffers.
    pub fn zeros_like_shared(&self) -> Array2<F> {
        Array2::zeros(self.shared.dim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_row_table(codes_equal: bool) -> CompressedItemTable<f64> {
        // rows e0=[1,3], e1=[3,5]; h1 = i mod 2, h2 = (i+1) mod 2 or = h1
        let shared = array![[1.0, 3.0], [3.0, 5.0]];
        let h1 = HashParams::new(1, 0, 31, 2).unwrap();
        let h2 = if codes_equal {
            h1
        } else {
            HashParams::new(1, 1, 31, 2).unwrap()
        };
        CompressedItemTable::from_parts(shared, vec![h1, h2], 2).unwrap()
    }

    #[test]
    fn rows_for_rate() {
        assert_eq!(shared_rows_for_rate(12_101, 2.0).unwrap(), 6_051);
        assert_eq!(shared_rows_for_rate(100, 1.0).unwrap(), 100);
        assert_eq!(shared_rows_for_rate(100, 16.0).unwrap(), 7);
        assert_eq!(shared_rows_for_rate(18_357, 16.0).unwrap(), 1_148);
        assert!(shared_rows_for_rate(100, 0.5).is_err());
        assert!(shared_rows_for_rate(100, f64::NAN).is_err());
        assert!(shared_rows_for_rate(0, 2.0).is_err());
    }

    #[test]
    fn mean_of_two_rows() {
        let t = two_row_table(false);
        assert_eq!(t.item_embedding(0).unwrap(), array![2.0, 4.0]);
        assert!(t.item_embedding(2).is_err());
    }

    #[test]
    fn single_hash_reads_one_row() {
        let shared = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let t = CompressedItemTable::identity(shared.clone()).unwrap();
        for i in 0..3 {
            assert_eq!(t.item_embedding(i).unwrap(), shared.row(i));
        }
    }

    #[test]
    fn gradient_split_across_distinct_rows() {
        let t = two_row_table(false);
        let mut sink = t.zeros_like_shared();
        t.accumulate_gradient(0, array![2.0, 2.0].view(), &mut sink).unwrap();
        assert_eq!(sink, array![[1.0, 1.0], [1.0, 1.0]]);
    }

    #[test]
    fn gradient_counts_collisions() {
        let t = two_row_table(true);
        let mut sink = t.zeros_like_shared();
        t.accumulate_gradient(0, array![2.0, 2.0].view(), &mut sink).unwrap();
        assert_eq!(sink, array![[2.0, 2.0], [0.0, 0.0]]);
    }

    #[test]
    fn gradient_shape_mismatch() {
        let t = two_row_table(false);
        let mut sink = t.zeros_like_shared();
        assert!(t.accumulate_gradient(0, array![1.0].view(), &mut sink).is_err());
        let mut bad = Array2::zeros((3, 2));
        assert!(t.accumulate_gradient(0, array![1.0, 1.0].view(), &mut bad).is_err());
    }

    #[test]
    fn compression_stats_counts() {
        let t = CompressedItemTable::<f32>::build(12_101, 16, 2.0, 2, 0).unwrap();
        let s = t.compression_stats();
        assert_eq!(t.rows(), 6_051);
        assert_eq!(s.parameter_count, 96_816);
        assert!((s.ratio - 12_101.0 / 6_051.0).abs() < 1e-12);
        let u = CompressedItemTable::<f32>::build(50, 4, 1.0, 2, 0).unwrap();
        assert_eq!(u.compression_stats().ratio, 1.0);
    }

    #[test]
    fn build_validates() {
        assert!(CompressedItemTable::<f32>::build(100, 8, 0.9, 2, 0).is_err());
        assert!(CompressedItemTable::<f32>::build(100, 0, 2.0, 2, 0).is_err());
        assert!(CompressedItemTable::<f32>::build(100, 8, 2.0, 0, 0).is_err());
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let a = CompressedItemTable::<f32>::build(64, 16, 4.0, 2, 9).unwrap();
        let b = CompressedItemTable::<f32>::build(64, 16, 4.0, 2, 9).unwrap();
        assert_eq!(a, b);
        let bound = 1.0 / 4.0;
        assert!(a.shared().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn manifest_roundtrip() {
        let t = CompressedItemTable::<f32>::build(40, 8, 4.0, 3, 1).unwrap();
        let back = CompressedItemTable::from_manifest(&t.manifest(), t.shared().clone()).unwrap();
        assert_eq!(back, t);
    }
}
