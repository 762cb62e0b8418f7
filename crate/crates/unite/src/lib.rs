//! File formats, a file-backed model provider and the `unite` command line
//! for the `unite-core` sampling pipeline.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod fsio;
pub mod parallel;
pub mod provider;
pub mod report;
pub mod stages;

pub use config::RunConfig;
pub use error::{CliError, FormatError};
