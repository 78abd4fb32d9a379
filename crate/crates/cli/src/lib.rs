//! Command-line front end for the `nes-core` simulator.
//!
//! Experiments are described by TOML files; see [`config::ExperimentConfig`].

pub mod commands;
pub mod config;
pub mod error;
pub mod registry;

pub use error::{CliError, Result};
