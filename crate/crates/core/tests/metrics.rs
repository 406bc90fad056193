use hashvocab::eval::{
    dcg_at_k, evaluate_ranker, hr_at_k, item_rank, mean_hr_at_k, ndcg_at_k, ndcg_at_k_graded,
};
use hashvocab::prompt::PromptSample;
use ndarray::array;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook DCG over a binary relevance list, divided by the ideal DCG.
fn reference_ndcg(ranked: &[usize], truth: usize, k: usize) -> f64 {
    let rel: Vec<f64> = ranked.iter().map(|&i| if i == truth { 1.0 } else { 0.0 }).collect();
    let dcg: f64 = rel
        .iter()
        .take(k)
        .enumerate()
        .map(|(pos, r)| r * std::f64::consts::LN_2 / ((pos + 2) as f64).ln())
        .sum();
    let ideal = if rel.iter().any(|&r| r > 0.0) { 1.0 } else { 0.0 };
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}

fn reference_hr(ranked: &[usize], truth: usize, k: usize) -> f64 {
    if ranked.iter().take(k).any(|&i| i == truth) {
        1.0
    } else {
        0.0
    }
}

#[test]
fn random_cases_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let mut ranked: Vec<usize> = (0..n).collect();
        ranked.shuffle(&mut rng);
        let truth = rng.random_range(0..n + 5);
        let k = rng.random_range(1..30);
        assert!((ndcg_at_k(&ranked, truth, k) - reference_ndcg(&ranked, truth, k)).abs() <= 1e-12);
        assert_eq!(hr_at_k(&ranked, truth, k), reference_hr(&ranked, truth, k));
    }
}

#[test]
fn anchor_values() {
    let ranked = [4, 8, 15, 16, 23, 42];
    assert_eq!(ndcg_at_k(&ranked, 4, 5), 1.0);
    assert!((ndcg_at_k(&ranked, 15, 5) - 0.5).abs() < 1e-15);
    assert_eq!(ndcg_at_k(&ranked, 42, 5), 0.0);
    assert_eq!(hr_at_k(&ranked, 42, 5), 0.0);
    assert_eq!(hr_at_k(&ranked, 23, 5), 1.0);
}

#[test]
fn graded_form_reduces_to_single_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let n = rng.random_range(1..25);
        let pos = rng.random_range(0..n);
        let mut rel = vec![0.0; n];
        rel[pos] = 1.0;
        let ranked: Vec<usize> = (0..n).collect();
        let k = rng.random_range(1..30);
        assert!((ndcg_at_k_graded(&rel, k) - ndcg_at_k(&ranked, pos, k)).abs() < 1e-12);
    }
    // Two relevant items in reverse ideal order.
    let got = ndcg_at_k_graded(&[1.0, 2.0], 2);
    let want = (1.0 + 3.0 / 3f64.log2()) / (3.0 + 1.0 / 3f64.log2());
    assert!((got - want).abs() < 1e-12);
    assert_eq!(dcg_at_k(&[0.0, 0.0], 2), 0.0);
    assert_eq!(ndcg_at_k_graded(&[0.0, 0.0], 2), 0.0);
}

#[test]
fn ties_break_toward_lower_index() {
    let scores = array![0.5f32, 0.9, 0.9, 0.1];
    assert_eq!(item_rank(scores.view(), 1), 1);
    assert_eq!(item_rank(scores.view(), 2), 2);
    assert_eq!(item_rank(scores.view(), 0), 3);
    assert_eq!(item_rank(scores.view(), 3), 4);
}

#[test]
fn uniform_random_ranker_hits_k_over_n() {
    let n = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let samples: Vec<PromptSample> = (0..20_000)
        .map(|_| PromptSample {
            history: vec![rng.random_range(0..n)],
            target: rng.random_range(0..n),
        })
        .collect();
    let mut ranker_rng = ChaCha8Rng::seed_from_u64(78);
    let report = evaluate_ranker("random", &samples, &[10], |_| {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ranker_rng);
        Ok(order)
    })
    .unwrap();
    assert!((report.hr(10) - 0.1).abs() < 0.01, "{}", report.hr(10));

    let cases: Vec<(Vec<usize>, usize)> = samples.iter().take(50).map(|s| ((0..n).collect(), s.target)).collect();
    let direct = cases.iter().filter(|(_, t)| *t < 10).count() as f64 / 50.0;
    assert_eq!(mean_hr_at_k(&cases, 10), direct);
}

#[test]
fn perfect_ranker_scores_one() {
    let samples: Vec<PromptSample> = (0..30).map(|i| PromptSample { history: vec![i], target: (i + 1) % 30 }).collect();
    let report = evaluate_ranker("oracle", &samples, &[1, 5], |s| {
        let mut order = vec![s.target];
        order.extend((0..30).filter(|&j| j != s.target));
        Ok(order)
    })
    .unwrap();
    assert_eq!(report.hr(1), 1.0);
    assert_eq!(report.ng(5), 1.0);
    assert_eq!(report.samples, 30);
}
