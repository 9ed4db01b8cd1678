//! Command-line harness: simulation campaigns, QQ data and the real-data
//! analysis workflow, all writing CSV files.

pub mod analyze;
pub mod campaign;
pub mod config;
pub mod csvio;
pub mod error;
pub mod pipeline;
pub mod qq;

pub use error::{CliError, CliResult};
