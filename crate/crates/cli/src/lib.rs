//! Stage-wise command-line pipeline over the `aadt-qrf` library.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod error;
pub mod figures;
pub mod stages;
pub mod svg;

pub use cli::run_from;
pub use config::PipelineConfig;
pub use error::{CliError, CliResult, ExitKind};
