//! Library side of the `noisespec` command: configuration schema, artifact
//! writing and the subcommand implementations.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
