//! File formats, configuration and experiment commands on top of
//! [`xdomain_core`].
//!
//! The `xdomain` binary is a thin wrapper over [`commands`]; everything it
//! does is also reachable as a library call.

pub mod checkpoint;
pub mod commands;
pub mod config;
mod error;
pub mod manifest;
pub mod parallel;
pub mod raw;
pub mod records;

pub use config::ExperimentConfig;
pub use parallel::Threads;
pub use error::FormatError;
