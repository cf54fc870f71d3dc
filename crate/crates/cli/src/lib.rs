//! Configuration, output files and subcommand drivers for the `kwc` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{Check, Options, Summary};
pub use config::{parse_config, ConfigError, LoadedConfig, RunConfig};
