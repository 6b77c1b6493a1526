//! Command-line front end for `hnko-core`: presets, file formats, run
//! manifests and the end-to-end pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{run, run_pipeline, Invocation, PipelineResult};
pub use config::ExperimentConfig;
pub use error::CliError;
