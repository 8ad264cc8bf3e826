//! Adam, population pre-training, frozen-prior adaptation and the freezing
//! ablation.

mod adam;
mod config;
mod engine;
mod log;
mod pipelines;

pub use adam::{Adam, AdamConfig};
pub use config::{Loss, TrainConfig};
pub use engine::RunOptions;
pub use log::{LogRow, RunLog, LOG_HEADER};
pub use pipelines::{
    adapt, fit_scratch, pretrain, run_ablation, AblationMode, AblationOutput, AdaptOptions,
    AdaptOutput, PretrainOutput, SubjectInit, NAIVE_LABEL,
};
