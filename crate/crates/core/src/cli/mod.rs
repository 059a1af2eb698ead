//! Command-line front end: configuration and experiment pipelines.

pub mod config;
pub mod run;

pub use config::{load_config, parse_config, ExperimentConfig, ExperimentKind};
pub use run::{run, stage_rng, RunSummary};
