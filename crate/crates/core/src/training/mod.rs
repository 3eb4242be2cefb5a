//! Losses, optimizer, schedule, and the training loop.

mod adam;
mod config;
mod gradcheck;
mod loss;
mod schedule;
mod trainer;

pub use adam::{adam_step, clip_global_norm, global_norm, AdamState, MomentEntry};
pub use config::{word_filter_mask, TrainConfig, WordFilter};
pub use gradcheck::{check_model_gradients, GradCheckTask};
pub use loss::total_loss;
pub use schedule::{PlateauSchedule, LR_FLOOR, PLATEAU_FACTOR, PLATEAU_MIN_DELTA};
pub use trainer::{train, BestSnapshot, EpochLog, TrainLog, Trainer};
