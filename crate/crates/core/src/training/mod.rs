//! Optimizer, learning-rate schedule, experiment configs and the training loops.

mod config;
mod optim;
mod schedule;
mod trainer;

pub use config::{ExperimentConfig, LossKind};
pub use optim::{sgd_momentum_step, OptimizerState};
pub use schedule::{cosine_lr, SchedulerConfig};
pub use trainer::{distill, distill_from, train, EpochRecord, TrainHistory};
pub(crate) use trainer::fit_images;
