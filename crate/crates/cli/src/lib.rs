//! Library backing the `tscn` binary; exposed so integration tests can
//! drive the commands in-process.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csv;
pub mod dataspec;
pub mod error;
pub mod svg;

pub use commands::{cmd_embed, cmd_eval, cmd_scatter, cmd_train, EvalOptions};
pub use error::{CliError, Result};
