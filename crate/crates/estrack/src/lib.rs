//! Config-driven runner for extremum seeking experiments.
//!
//! One JSON file describes one experiment: the cost fixture, the controller,
//! the integration policy and a list of checks. [`runner::run_experiment`]
//! writes `trajectory.csv`, per-check CSVs and `report.txt`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod csv_out;
pub mod presets;
pub mod runner;

pub use config::{parse_config, Check, ConfigError, ExperimentConfig};
pub use runner::{run_experiment, ExitStatus, Mode, RunOutcome};
