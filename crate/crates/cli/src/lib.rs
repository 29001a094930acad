//! Config-driven batch front end for `ruelle-core`.

pub mod config;
pub mod emit;
pub mod error;
pub mod run;
pub mod scenarios;
pub mod suite;

pub use config::JobConfig;
pub use error::CliError;
