//! Command implementations behind the `hmeval` binary.

pub mod arch;
pub mod commands;
pub mod config;
pub mod output;
pub mod stats;

pub use commands::{cmd_evaluate, cmd_heatmap, cmd_perturb_study, cmd_train_correlation};
pub use config::RunConfig;
