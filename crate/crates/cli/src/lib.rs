//! Command-line front end for the `ebdnn` simulation studies: config
//! loading, the four subcommands and their CSV/JSON reports.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{execute, Cli, Command, Outcome, RunArgs};
pub use config::{parse_config, parse_config_str, CliError};
pub use report::Format;
