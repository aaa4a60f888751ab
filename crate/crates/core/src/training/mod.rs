//! Objective, optimizers, training loop and evaluation.

pub mod loss;
pub mod metrics;
pub mod optim;
pub mod train;

pub use loss::{cce_logit_grad, cce_loss};
pub use metrics::{evaluate, evaluate_with, exact_match, predict_dataset, score, EvalReport};
pub use optim::{sam_step, Adam, AdamConfig};
pub use train::{epoch_orders, train, EpochRecord, History, TrainConfig, TrainOutcome};
