//! Pipeline steps, artifacts and orchestration behind the `rfdeep` binary.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod steps;
pub mod tables;

pub use config::RunConfig;
pub use error::{CliError, CliResult, Stage};
