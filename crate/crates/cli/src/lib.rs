//! Command-line orchestration for the unlearn toolkit: run configuration,
//! subcommand implementations and the aggregated comparison table.

pub mod commands;
pub mod config;
pub mod report;
