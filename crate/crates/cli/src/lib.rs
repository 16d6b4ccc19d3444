pub mod artifacts;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod table;

/// How `evaluate` prints the comparison to stdout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Table,
    Json,
}
