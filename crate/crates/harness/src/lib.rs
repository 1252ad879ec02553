//! Config parsing, experiment orchestration and output for the `brwp` CLI.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod validate;

pub use config::{
    load_config, parse_config, parse_config_str, ExperimentConfig, ExperimentKind, SamplerKind,
};
pub use error::HarnessError;
pub use experiment::{run_experiment, RunRecord, RunStatus};
pub use validate::{validate_kernels, ValidationReport};
