//! Experiment configuration and the commands behind the `semfi` binary.

pub mod ablate;
pub mod commands;
pub mod config;
pub mod record;
pub mod train;

pub use ablate::{ablation_variants, cmd_ablate, AblationRow, ABLATION_COLUMNS};
pub use commands::{cmd_bench, cmd_data, cmd_report, cmd_sample, BenchSource, Generator, SampleArgs};
pub use config::{ExperimentConfig, TrainConfig, TrainMode, SCHEMA_VERSION};
pub use record::{content_hash, RunRecord};
pub use train::{cmd_train, smoothed, LossEntry, TrainOutcome};
