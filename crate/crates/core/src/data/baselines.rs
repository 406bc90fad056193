use super::synthetic::TransitionMatrix;
use crate::error::{Error, Result};
use crate::prompt::PromptSample;

/// All items by descending training target frequency, ties by index.
pub fn popularity_baseline(train: &[PromptSample], n_items: usize) -> Result<Vec<usize>> {
    if train.is_empty() {
        return Err(Error::invalid("popularity needs a non-empty training split"));
    }
    let mut counts = vec![0usize; n_items];
    for s in train {
        *counts.get_mut(s.target).ok_or(Error::OutOfRange {
            what: "item",
            index: s.target,
            size: n_items,
        })? += 1;
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    Ok(order)
}

/// Top `k` items by true next-step probability from `last`, ties by index.
pub fn oracle_recommender(matrix: &TransitionMatrix, last: usize, k: usize) -> Result<Vec<usize>> {
    let row = matrix.row(last)?;
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(target: usize) -> PromptSample {
        PromptSample {
            history: vec![0],
            target,
        }
    }

    #[test]
    fn majority_target_first_and_unseen_last() {
        let train = [s(2), s(2), s(1), s(3)];
        assert_eq!(popularity_baseline(&train, 5).unwrap(), vec![2, 1, 3, 0, 4]);
    }

    #[test]
    fn oracle_ties_by_index() {
        let m = TransitionMatrix {
            n_items: 3,
            rows: vec![vec![0.25, 0.5, 0.25]; 3],
        };
        assert_eq!(oracle_recommender(&m, 0, 3).unwrap(), vec![1, 0, 2]);
    }
}
