//! Experiment configs, runners and the built-in scene suites.

mod config;
mod runner;
pub mod suites;

pub use config::{Arm, ExperimentConfig, SweepAxis};
pub use runner::{
    execute, run_experiment, run_experiment_with, run_sweep, sweep, sweep_csv, write_artifacts, ExperimentResult,
    SweepRow,
};
