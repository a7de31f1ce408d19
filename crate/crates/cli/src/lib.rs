//! Library side of the `stiffsense` binary: configuration, on-disk dataset
//! and report formats, and the command implementations. Kept as a library so
//! integration tests can drive commands without spawning processes.

pub mod clock;
pub mod cmd;
pub mod config;
pub mod dataset;
pub mod error;
pub mod models;
pub mod report;

pub use error::CliError;
