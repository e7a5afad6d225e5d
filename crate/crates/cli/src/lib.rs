//! Scenario runner for the `hybrid-epr-core` simulator: TOML scenarios in,
//! versioned JSON reports and CSV plot data out.

pub mod commands;
pub mod error;
pub mod report;
pub mod scenario;
pub mod units;

pub use commands::{execute, Overrides, Verb};
pub use error::{CliError, CliResult};
