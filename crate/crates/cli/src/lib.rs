//! `aui-rl` command-line front end and HTTP decision service.

pub mod commands;
pub mod output;
pub mod serve;

pub use commands::{run, Cli, Command};
