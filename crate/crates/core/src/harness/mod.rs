//! Seeded experiment harness: configuration, finite-difference oracle,
//! invariance suite, trajectory runner and CLI.

pub mod cli;
pub mod config;
pub mod models;
pub mod oracle;
pub mod suite;
pub mod trajectory;

pub use cli::cli_main;
pub use config::ExperimentConfig;
pub use suite::{run_invariance_suite, SuiteReport};
pub use trajectory::{run_trajectory, TrajectoryRecord};
