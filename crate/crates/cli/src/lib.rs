//! Pipeline orchestration behind the `commedia` binary: configuration,
//! cached stages, and the report files each stage emits.

pub mod analysis;
pub mod config;
pub mod pipeline;
pub mod report;

use std::fmt;
use std::path::PathBuf;

pub use config::RunConfig;
pub use pipeline::Pipeline;
pub use report::{run_stage, Stage};

/// A required input file does not exist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingInput(pub PathBuf);

impl fmt::Display for MissingInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "input file not found: {}", self.0.display())
    }
}

impl std::error::Error for MissingInput {}
