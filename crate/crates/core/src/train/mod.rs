//! Speaker-classification training.

mod config;
mod loss;
mod trainer;

pub use config::TrainConfig;
pub use loss::{ce_loss, predictions, ClassifierHead};
pub use trainer::{clean_accuracy, train, StepLog, TrainReport, TrainSet};
