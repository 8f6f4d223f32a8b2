//! Wiring for the `dca` command: configuration, input selection, and the
//! `run`, `oracle`, `generate` and `inspect` subcommands.

pub mod commands;
pub mod config;

pub use commands::{execute, run, Failure, Runner};
pub use config::{Format, Overrides, RunConfig};
