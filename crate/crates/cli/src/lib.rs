//! Library surface of the command-line tool: configuration, dataset plumbing,
//! the metrics format, and one module per subcommand. The binary in
//! `main.rs` is a thin argument-parsing wrapper over these.

pub mod cache;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod errors;
pub mod metrics;
