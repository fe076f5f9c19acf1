//! Configuration files, experiment orchestration and report output around
//! `lmm-core`. The `lmm` binary is a thin clap layer over [`commands`],
//! [`experiments`] and [`validate`].

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod render;
pub mod report;
pub mod svg;
pub mod trajectory;
pub mod validate;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
