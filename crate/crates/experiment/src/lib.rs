//! Scenario runner for the QFI experiments: TOML configs in, CSV tables and a
//! reproducibility manifest out.

pub mod analysis;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;
pub mod scenarios;

pub use config::{ExperimentConfig, Scenario};
pub use error::{ExperimentError, Result};
pub use output::RunManifest;
pub use runner::{report, run, sweep, RunOptions, RunOutcome, SweepOutcome};
