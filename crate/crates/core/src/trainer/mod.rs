//! AdamW training with early stopping, evaluation and metrics.

mod adamw;
mod metrics;
mod train;

pub use adamw::{AdamW, AdamWConfig};
pub use metrics::MetricsReport;
pub use train::{batch_gradient, evaluate, predict_all, train, train_from, EpochRecord, History, TrainConfig};
