//! Experiment runner: configs, provenance-stamped outputs, the CLI and the acceptance suites.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod output;
pub mod suites;
