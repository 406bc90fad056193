//! Interaction logs, leave-last-out splits, synthetic corpora and reference recommenders.

mod baselines;
mod interactions;
mod split;
mod synthetic;

pub use baselines::{oracle_recommender, popularity_baseline};
pub use interactions::{load_interactions, write_interactions, InteractionRecord, InteractionSequence};
pub use split::{leave_last_out_split, read_samples, write_samples, DatasetSplit, DEFAULT_MAX_HISTORY};
pub use synthetic::{generate_synthetic, SyntheticCorpus, SyntheticSpec, TransitionMatrix};
