//! IO side of the decoding laboratory: file formats and the `declab`
//! command-line tool built on `declab-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod pgm;

pub use error::{CliError, CliResult};
