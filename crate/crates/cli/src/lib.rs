//! Trip-directory storage, export bundles and the `drivesense` command line.

pub mod bundle;
pub mod commands;
pub mod hashing;
pub mod store;

pub use commands::{run, Cli, CliError};
