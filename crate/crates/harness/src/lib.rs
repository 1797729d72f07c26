//! Experiment runner and acceptance suites on top of `posmech`.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod suites;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiments::run_experiment;
pub use report::RunReport;
