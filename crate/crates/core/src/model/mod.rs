//! The three model variants, joint training, fine-tuning, probability
//! averaging across models, evaluation and checkpoints.

mod aggregate;
mod checkpoint;
mod evaluate;
mod graph;
mod train;
mod variant;

pub use aggregate::{aggregate, predict_label};
pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint, CHECKPOINT_MAGIC};
pub use evaluate::{evaluate, evaluate_probs, predict_probs, Metrics};
pub use graph::{build_model, FeatureNorm, ModelGraph, HEAD_INIT_SCALE, SIDE_L2};
pub use train::{fine_tune, prepare_fine_tune, train, EpochRecord, FeatureSource, TrainConfig, Trainer};
pub use variant::{Arch, ModelVariant};
