//! Command-line driver for the `nls-core` solvers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Command, Summary, Verdict};
pub use config::RunConfig;
pub use error::CliError;
