//! Fold construction, the Adam optimizer, the training loop and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod folds;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use folds::{make_folds, FoldSpec};
pub use train::{evaluate, train, train_resume, Evaluation, TrainConfig, TrainOutcome};
