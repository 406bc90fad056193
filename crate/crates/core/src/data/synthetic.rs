//! Markov-chain corpora with known transition probabilities.
//!
//! Items are split into categories of near-equal size. Each item's next-item
//! distribution puts `1 - noise` of its mass on a Dirichlet(alpha) draw over
//! its own category and spreads `noise` uniformly over the catalog. Titles are
//! built from a word pool owned by the category, so a title reveals its
//! item's category.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use super::interactions::InteractionSequence;
use crate::catalog::ItemCatalog;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_items: usize,
    pub n_categories: usize,
    pub alpha: f64,
    /// Probability mass spread uniformly over all items.
    pub noise: f64,
    pub title_words: usize,
    /// Distinct words available to each category.
    pub pool_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub n_sequences: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_items: 200,
            n_categories: 10,
            alpha: 0.1,
            noise: 0.05,
            title_words: 2,
            pool_size: 8,
            min_len: 8,
            max_len: 20,
            n_sequences: 5000,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(m.to_string()));
        if self.n_items == 0 || self.n_categories == 0 || self.n_categories > self.n_items {
            return fail("need 1 <= n_categories <= n_items");
        }
        if !(self.alpha > 0.0) || !(0.0..=1.0).contains(&self.noise) {
            return fail("alpha must be positive and noise within [0, 1]");
        }
        if self.min_len < 2 || self.max_len < self.min_len {
            return fail("sequence lengths need 2 <= min_len <= max_len");
        }
        if self.title_words == 0 || self.pool_size == 0 {
            return fail("titles need at least one word from a non-empty pool");
        }
        let per_cat = self.n_items.div_ceil(self.n_categories) as f64;
        if (self.pool_size as f64).powi(self.title_words as i32) < per_cat {
            return fail("word pool too small for distinct titles within a category");
        }
        if self.n_categories * self.pool_size > SYLLABLES.len().pow(3) {
            return fail("too many distinct words requested");
        }
        Ok(())
    }
}

/// Row-stochastic `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub n_items: usize,
    pub rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn row(&self, i: usize) -> Result<&[f64]> {
        self.rows.get(i).map(Vec::as_slice).ok_or(Error::OutOfRange {
            what: "item",
            index: i,
            size: self.n_items,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let m: TransitionMatrix = serde_json::from_reader(BufReader::new(f))?;
        if m.rows.len() != m.n_items || m.rows.iter().any(|r| r.len() != m.n_items) {
            return Err(Error::Shape(format!("transition matrix is not {0}x{0}", m.n_items)));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub catalog: ItemCatalog,
    pub sequences: Vec<InteractionSequence>,
    pub transitions: TransitionMatrix,
    pub categories: Vec<usize>,
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "to", "vi", "ba", "de", "fo", "gu", "ha", "ji", "pe", "zo",
];

fn word(id: usize) -> String {
    let n = SYLLABLES.len();
    format!("{}{}{}", SYLLABLES[id / (n * n) % n], SYLLABLES[id / n % n], SYLLABLES[id % n])
}

fn dirichlet_row<R: Rng>(rng: &mut R, members: &[usize], alpha: f64) -> Vec<(usize, f64)> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated");
    let mut draws: Vec<f64> = members.iter().map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.iter_mut().for_each(|d| *d /= sum);
    } else {
        // Every draw underflowed: the small-alpha limit is a point mass.
        draws.fill(0.0);
        draws[rng.random_range(0..members.len())] = 1.0;
    }
    members.iter().copied().zip(draws).collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let n = spec.n_items;

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(spec.seed, "synthetic/categories"));
    let mut categories = vec![0; n];
    for (pos, &item) in perm.iter().enumerate() {
        categories[item] = pos % spec.n_categories;
    }
    let members: Vec<Vec<usize>> = (0..spec.n_categories)
        .map(|c| (0..n).filter(|&i| categories[i] == c).collect())
        .collect();

    let mut title_rng = seed::rng(spec.seed, "synthetic/titles");
    let mut used: Vec<HashSet<Vec<usize>>> = vec![HashSet::new(); spec.n_categories];
    let mut titles = Vec::with_capacity(n);
    for &c in &categories {
        let words = loop {
            let pick: Vec<usize> = (0..spec.title_words)
                .map(|_| c * spec.pool_size + title_rng.random_range(0..spec.pool_size))
                .collect();
            if used[c].insert(pick.clone()) {
                break pick;
            }
        };
        titles.push(words.into_iter().map(word).collect::<Vec<_>>().join(" "));
    }
    let catalog = ItemCatalog::from_pairs(
        titles.into_iter().enumerate().map(|(i, t)| (format!("item{i:05}"), t)),
    )?;

    let mut trans_rng = seed::rng(spec.seed, "synthetic/transitions");
    let uniform = spec.noise / n as f64;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![uniform; n];
            for (j, p) in dirichlet_row(&mut trans_rng, &members[categories[i]], spec.alpha) {
                row[j] += (1.0 - spec.noise) * p;
            }
            row
        })
        .collect();
    let samplers: Vec<WeightedIndex<f64>> = rows
        .iter()
        .map(|r| WeightedIndex::new(r).expect("rows carry positive mass"))
        .collect();

    let sequences = (0..spec.n_sequences)
        .map(|s| {
            let mut rng = seed::rng(spec.seed, &format!("synthetic/sequence{s}"));
            let len = rng.random_range(spec.min_len..=spec.max_len);
            let mut items = Vec::with_capacity(len);
            items.push(rng.random_range(0..n));
            while items.len() < len {
                let prev = *items.last().expect("non-empty");
                items.push(samplers[prev].sample(&mut rng));
            }
            InteractionSequence {
                user_id: format!("user{s:06}"),
                items,
            }
        })
        .collect();

    Ok(SyntheticCorpus {
        catalog,
        sequences,
        transitions: TransitionMatrix { n_items: n, rows },
        categories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_distributions() {
        let c = generate_synthetic(&SyntheticSpec {
            n_sequences: 10,
            ..SyntheticSpec::default()
        })
        .unwrap();
        for row in &c.transitions.rows {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn titles_use_category_pool_only() {
        let spec = SyntheticSpec {
            n_sequences: 1,
            ..SyntheticSpec::default()
        };
        let c = generate_synthetic(&spec).unwrap();
        for (i, item) in c.catalog.items().iter().enumerate() {
            let cat = c.categories[i];
            let pool: Vec<String> = (0..spec.pool_size).map(|w| word(cat * spec.pool_size + w)).collect();
            assert!(item.title.split(' ').all(|w| pool.iter().any(|p| p == w)));
        }
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            SyntheticSpec { n_categories: 300, ..SyntheticSpec::default() },
            SyntheticSpec { alpha: 0.0, ..SyntheticSpec::default() },
            SyntheticSpec { min_len: 1, ..SyntheticSpec::default() },
            SyntheticSpec { pool_size: 2, title_words: 2, ..SyntheticSpec::default() },
        ] {
            assert!(generate_synthetic(&spec).is_err());
        }
    }
}
