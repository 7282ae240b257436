//! Experiment layer over `hybridfl-core`: YAML configs, CSV datasets,
//! telemetry, JSON results, run comparison and the command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cli;
pub mod config;
pub mod dataset_io;
pub mod experiment;
pub mod report;
pub mod telemetry;
