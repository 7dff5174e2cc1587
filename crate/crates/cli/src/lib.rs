//! Experiment runner around `pctrain-core`: configuration parsing, the
//! baseline / predictor-corrector / compare modes, and the output files.

pub mod config;
pub mod metrics;
pub mod run;

pub use config::{parse_config, ConfigError, DatasetKind, Flags, Mode, RunSpec};
pub use metrics::{write_metrics, MetricsRow};
pub use run::{run, RunError, RunOutcome};
