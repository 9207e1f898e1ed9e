//! Command-line plumbing for the denoising workbench: layered configuration,
//! hashed run directories and the subcommand pipeline.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{load_config, parse_override, RunConfig};
pub use error::{exit, CliError, CliResult};
