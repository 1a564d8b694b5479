//! Synthetic benchmark, tensor files and experiment orchestration.

pub mod experiment;
pub mod io;
pub mod report;
pub mod synthetic;

pub use experiment::{run_arm, run_experiment, Algorithm, ExperimentConfig, Summary};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
