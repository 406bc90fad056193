use std::collections::HashMap;
use std::io::Write;

use hashvocab::data::{
    generate_synthetic, leave_last_out_split, load_interactions, oracle_recommender, popularity_baseline,
    read_samples, write_samples, InteractionSequence, SyntheticSpec,
};
use hashvocab::eval::evaluate_ranker;
use hashvocab::prompt::PromptSample;
use hashvocab::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sorted(mut v: Vec<PromptSample>) -> Vec<PromptSample> {
    v.sort_by(|a, b| (&a.history, a.target).cmp(&(&b.history, b.target)));
    v
}

#[test]
fn split_enumerates_every_prefix() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let seqs: Vec<InteractionSequence> = (0..100)
        .map(|u| InteractionSequence {
            user_id: format!("u{u}"),
            items: (0..rng.random_range(2..15)).map(|_| rng.random_range(0..40)).collect(),
        })
        .collect();
    let h = 4;
    let split = leave_last_out_split(&seqs, h, 0.1, 5).unwrap();

    let mut want_train = Vec::new();
    let mut want_test = Vec::new();
    for s in &seqs {
        let n = s.items.len();
        for t in 1..n {
            let lo = t.saturating_sub(h);
            let sample = PromptSample { history: s.items[lo..t].to_vec(), target: s.items[t] };
            if t == n - 1 {
                want_test.push(sample);
            } else {
                want_train.push(sample);
            }
        }
    }
    assert_eq!(split.test, want_test);
    let mut got = split.train.clone();
    got.extend(split.validation.iter().cloned());
    assert_eq!(sorted(got), sorted(want_train));
    assert!(!split.validation.is_empty());
    assert!(split.train.iter().chain(&split.test).all(|s| !s.history.is_empty() && s.history.len() <= h));
}

#[test]
fn split_is_seeded() {
    let seqs: Vec<InteractionSequence> = (0..50)
        .map(|u| InteractionSequence { user_id: format!("u{u}"), items: vec![u, u + 1, u + 2, u + 3] })
        .collect();
    let a = leave_last_out_split(&seqs, 20, 0.2, 3).unwrap();
    let b = leave_last_out_split(&seqs, 20, 0.2, 3).unwrap();
    let c = leave_last_out_split(&seqs, 20, 0.2, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.validation, c.validation);
    assert_eq!(a.validation.len(), 10 * 2);
}

#[test]
fn samples_round_trip_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    let samples = vec![
        PromptSample { history: vec![1, 2], target: 3 },
        PromptSample { history: vec![9], target: 0 },
    ];
    write_samples(&path, &samples).unwrap();
    assert_eq!(read_samples(&path).unwrap(), samples);
}

#[test]
fn interactions_sort_by_timestamp_and_drop_short_users() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, r#"{{"user_id":"a","external_item_id":"x","title":"red apple","timestamp":3}}"#).unwrap();
    writeln!(f, r#"{{"user_id":"a","external_item_id":"y","title":"green pear","timestamp":1}}"#).unwrap();
    writeln!(f, r#"{{"user_id":"b","external_item_id":"x","title":"red apple","timestamp":2}}"#).unwrap();
    writeln!(f, r#"{{"user_id":"a","external_item_id":"z","title":"blue plum","timestamp":2}}"#).unwrap();
    drop(f);
    let (catalog, seqs) = load_interactions(&path).unwrap();
    assert_eq!(catalog.len(), 3);
    assert_eq!(seqs.len(), 1);
    let names: Vec<&str> = seqs[0].items.iter().map(|&i| catalog.items()[i].external_id.as_str()).collect();
    assert_eq!(names, ["y", "z", "x"]);
}

#[test]
fn malformed_interaction_line_reports_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, "{\"user_id\":\"a\",\"external_item_id\":\"x\",\"title\":\"t\"}\nnot json\n").unwrap();
    match load_interactions(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn synthetic_transitions_match_their_matrix() {
    let spec = SyntheticSpec {
        n_items: 20,
        n_categories: 2,
        min_len: 11,
        max_len: 11,
        n_sequences: 10_000,
        seed: 6,
        ..SyntheticSpec::default()
    };
    let corpus = generate_synthetic(&spec).unwrap();
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    let mut from = [0usize; 20];
    for s in &corpus.sequences {
        for w in s.items.windows(2) {
            *counts.entry((w[0], w[1])).or_default() += 1;
            from[w[0]] += 1;
        }
    }
    assert_eq!(from.iter().sum::<usize>(), 100_000);
    for (i, &n) in from.iter().enumerate() {
        let row = corpus.transitions.row(i).unwrap();
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let tv: f64 = (0..20)
            .map(|j| (counts.get(&(i, j)).copied().unwrap_or(0) as f64 / n as f64 - row[j]).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.05, "row {i}: total variation {tv}");
    }
}

#[test]
fn synthetic_titles_are_unique_and_category_coherent() {
    let corpus = generate_synthetic(&SyntheticSpec { n_sequences: 5, ..SyntheticSpec::default() }).unwrap();
    let mut seen = HashMap::new();
    for (i, t) in corpus.catalog.titles().enumerate() {
        assert_eq!(t.split(' ').count(), 2);
        assert!(seen.insert(t.to_string(), i).is_none(), "duplicate title {t}");
        for (j, u) in corpus.catalog.titles().enumerate() {
            if corpus.categories[i] != corpus.categories[j] {
                assert!(t.split(' ').all(|w| !u.split(' ').any(|v| v == w)));
            }
        }
    }
    let sizes = (0..10).map(|c| corpus.categories.iter().filter(|&&x| x == c).count());
    assert!(sizes.into_iter().all(|s| s == 20));
}

#[test]
fn synthetic_generation_is_seeded() {
    let spec = SyntheticSpec { n_sequences: 50, ..SyntheticSpec::default() };
    let a = generate_synthetic(&spec).unwrap();
    let b = generate_synthetic(&spec).unwrap();
    assert_eq!(a.sequences, b.sequences);
    assert_eq!(a.transitions, b.transitions);
    let c = generate_synthetic(&SyntheticSpec { seed: 1, ..spec }).unwrap();
    assert_ne!(a.sequences, c.sequences);
}

#[test]
fn oracle_is_exact_for_deterministic_chains() {
    let spec = SyntheticSpec { alpha: 1e-6, noise: 0.0, n_sequences: 300, ..SyntheticSpec::default() };
    let corpus = generate_synthetic(&spec).unwrap();
    let split = leave_last_out_split(&corpus.sequences, 20, 0.0, 0).unwrap();
    let report = evaluate_ranker("oracle", &split.test, &[1], |s| {
        oracle_recommender(&corpus.transitions, *s.history.last().unwrap(), 1)
    })
    .unwrap();
    assert_eq!(report.hr(1), 1.0);
}

#[test]
fn popularity_orders_by_training_count() {
    let train = vec![
        PromptSample { history: vec![0], target: 2 },
        PromptSample { history: vec![1], target: 2 },
        PromptSample { history: vec![2], target: 3 },
        PromptSample { history: vec![0], target: 1 },
        PromptSample { history: vec![0], target: 3 },
        PromptSample { history: vec![0], target: 3 },
    ];
    assert_eq!(popularity_baseline(&train, 5).unwrap(), vec![3, 2, 1, 0, 4]);
}
