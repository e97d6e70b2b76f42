//! Orchestration: configuration, training and evaluation, statistics,
//! sensitivity analysis and reports.

pub mod analysis;
pub mod metrics;
pub mod report;
pub mod run_config;
pub mod stats;
pub mod train;

pub use analysis::{agent_sensitivity, mask_stats, pixel_sensitivity, MaskStats, SENSITIVITY_STEP};
pub use metrics::{EvalRecord, RunMetrics, TrainRecord};
pub use report::{report, summarize, RunResult, SummaryRow};
pub use run_config::{AugmentChoice, RunConfig};
pub use stats::{welch_t_test, FinalScore, Welch};
pub use train::{
    eval_stream, evaluate, load_checkpoint, rollout_observations, scripted_checkpoint, train, LoadedPolicy, Policy,
    Scripted, Trainer, SCRIPTED,
};
