//! Ranking metrics, held-out evaluation, throughput and the id-to-title probe.

mod bench;
mod evaluate;
mod metrics;
mod probe;

pub use bench::{throughput_bench, write_latency_csv, BenchMode, BenchReport};
pub use evaluate::{evaluate, evaluate_ranker, item_rank, MetricReport, DEFAULT_KS};
pub use metrics::{dcg_at_k, hr_at_k, hr_at_rank, mean_hr_at_k, ndcg_at_k, ndcg_at_k_graded, ndcg_at_rank, rank_of};
pub use probe::{id_title_probe, ProbeEntry, ProbeReport};
