//! Experiment harness: configuration schema, activation-dump wire
//! format, report assembly/emission, and the end-to-end pipeline behind
//! the `equisep` binary.

pub mod config;
pub mod dump;
pub mod experiment;
pub mod report;
