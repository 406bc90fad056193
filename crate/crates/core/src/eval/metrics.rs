//! Single-truth ranking metrics.
//!
//! With one relevant item, DCG@K is `1 / log2(rank + 1)` when the truth sits
//! at 1-based `rank <= K` and the ideal DCG is 1, so NG@K reduces to that
//! discount. The graded form is kept for arbitrary relevance vectors.

/// 1-based position of `truth` in `ranked`.
pub fn rank_of(ranked: &[usize], truth: usize) -> Option<usize> {
    ranked.iter().position(|&i| i == truth).map(|p| p + 1)
}

/// NG@K for a truth found at 1-based `rank`.
pub fn ndcg_at_rank(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

pub fn hr_at_rank(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0
    } else {
        0.0
    }
}

pub fn ndcg_at_k(ranked: &[usize], truth: usize, k: usize) -> f64 {
    rank_of(ranked, truth).map_or(0.0, |r| ndcg_at_rank(r, k))
}

pub fn hr_at_k(ranked: &[usize], truth: usize, k: usize) -> f64 {
    rank_of(ranked, truth).map_or(0.0, |r| hr_at_rank(r, k))
}

/// Fraction of `(ranking, truth)` pairs with a hit in the top `k`.
pub fn mean_hr_at_k(cases: &[(Vec<usize>, usize)], k: usize) -> f64 {
    if cases.is_empty() {
        return 0.0;
    }
    cases.iter().map(|(r, t)| hr_at_k(r, *t, k)).sum::<f64>() / cases.len() as f64
}

/// `sum_{i<=K} (2^rel_i - 1) / log2(i + 1)` over relevances in ranked order.
pub fn dcg_at_k(relevance: &[f64], k: usize) -> f64 {
    relevance
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &r)| (2f64.powf(r) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// DCG of `relevance` over the DCG of its descending sort; zero when nothing is relevant.
pub fn ndcg_at_k_graded(relevance: &[f64], k: usize) -> f64 {
    let mut ideal = relevance.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg_at_k(&ideal, k);
    if idcg == 0.0 {
        0.0
    } else {
        dcg_at_k(relevance, k) / idcg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let ranked = [7, 3, 9, 1, 0, 4];
        assert_eq!(ndcg_at_k(&ranked, 7, 5), 1.0);
        assert_eq!(ndcg_at_k(&ranked, 9, 5), 0.5);
        assert_eq!(ndcg_at_k(&ranked, 4, 5), 0.0);
        assert_eq!(hr_at_k(&ranked, 0, 5), 1.0);
        assert_eq!(hr_at_k(&ranked, 4, 5), 0.0);
        assert_eq!(hr_at_k(&ranked, 42, 5), 0.0);
    }

    #[test]
    fn two_hits_of_four() {
        let cases = vec![(vec![1, 2], 1), (vec![1, 2], 3), (vec![2, 1], 1), (vec![0, 1], 0)];
        assert_eq!(mean_hr_at_k(&cases, 1), 0.5);
    }

    #[test]
    fn graded_matches_binary() {
        let rel = [0.0, 0.0, 1.0, 0.0];
        assert!((ndcg_at_k_graded(&rel, 5) - 0.5).abs() < 1e-15);
        assert_eq!(ndcg_at_k_graded(&[0.0; 3], 3), 0.0);
    }
}
