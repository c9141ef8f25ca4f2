//! Configuration, optimizers and the full-batch training loop.

pub mod config;
pub mod dataset;
mod harness;
mod optimizer;

pub use config::{Arch, ConfigEntries, DataConfig, ModelSpec, TrainConfig};
pub use dataset::{row_normalize, Dataset, DatasetView, GraphDataset, NodeDataset};
pub use harness::{
    accuracy, argmax, build_model, evaluate, select_best, train, train_observed, train_on, EpochRecord, RunHistory,
};
pub use optimizer::{Optimizer, OptimizerKind};
