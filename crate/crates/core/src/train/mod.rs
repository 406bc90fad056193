//! Next-token training, parameter freezing, adapters and checkpoints.

mod checkpoint;
mod loss;
mod optim;
mod trainer;

pub use checkpoint::{write_curve_csv, Checkpoint, CheckpointManifest};
pub use loss::next_token_loss;
pub use optim::Adam;
pub use trainer::{
    encode_training_set, title_corpus, title_history_corpus, PretrainCorpus, train, trainable_groups, CurvePoint, TrainConfig, TrainExample, TrainMode,
    TrainOutcome, TrainState,
};
