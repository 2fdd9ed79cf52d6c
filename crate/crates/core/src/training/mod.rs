//! Minibatch training of `F` (and an encoder `g`) with Adam and scheduled
//! sampling.

mod checkpoint;
mod config;
mod data;
mod learned;
mod optim;
mod trainer;

pub use checkpoint::{checkpoint_dtype, Checkpoint, CheckpointHeader};
pub use config::{AdamConfig, GradMode, InitialMode, ModelConfig, NetworkConfig, Precision, TrainConfig};
pub use data::{history_before, sample_minibatch, ss_probability, window_len, windows_in, Normalizer, Sample, Window};
pub use learned::{Learned, LearnedSpec};
pub use optim::OptimizerState;
pub use trainer::{train, train_val_split, Best, LogRecord, TrainLog, Trainer};
