//! Command-line front end: dataset files, index build and query, oracles,
//! the statistical self-checks and result summaries.

pub mod args;
pub mod commands;
pub mod dataset_file;
pub mod error;
pub mod records;

pub use error::{CliError, ErrorKind};
