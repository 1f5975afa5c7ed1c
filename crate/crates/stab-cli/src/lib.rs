//! Command implementations behind the `stab` binary: experiment
//! configuration, checkpoint serialization and the train / eval / predict /
//! ablate entry points.

pub mod checkpoint;
pub mod commands;
pub mod config;
