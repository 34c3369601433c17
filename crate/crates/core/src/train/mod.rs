//! Optimizer, schedules, class weighting, augmentation and the training loop.

mod adam;
mod augment;
mod schedule;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use augment::{augment, Augmentation, MAX_SHIFT};
pub use schedule::{compute_class_weights, poly_lr, ClassWeightTable};
pub use trainer::{evaluate, predict, predict_logits, LogRecord, Stage, TrainConfig, TrainOutcome, Trainer, DIVERGENCE_FACTOR};
