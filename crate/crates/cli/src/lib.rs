//! Library half of the `drivetext` binary: configuration, artifact bookkeeping
//! and the pipeline commands.

pub mod artifacts;
pub mod commands;
pub mod config;
