//! Losses, optimizer, the dense-sparse / dense schedule and the training loop.

pub mod loss;
pub mod optim;
pub mod schedule;
mod trainer;

pub use loss::{combined_loss, cross_entropy, dice_loss, LossWeights};
pub use optim::Sgd;
pub use schedule::{choose_stride, DsdSchedule, Stage};
pub use trainer::{train, train_with, EpochRecord, MetricsLog, TrainConfig, TrainOutput};
