//! Command-line front end of protolayer: data ingestion, network assembly
//! from a TOML config, training and evaluation runs, gradient checks, the
//! response benchmark and prototype export.

// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod build;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod pgm;
pub mod run;
pub mod tools;

pub use error::{CliError, CliResult};
