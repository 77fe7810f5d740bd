//! Training, checkpointing and evaluation of the full model.

mod checkpoint;
mod config;
mod evaluate;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use config::TrainConfig;
pub use evaluate::{evaluate, predict, predict_bag_instances, predict_dataset, BagReport, Report};
pub use optim::Adam;
pub use train::{train, ModalityKind};
