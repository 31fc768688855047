//! Command-line laboratory on top of lab-core: experiment drivers for the
//! zero-noise sweeps, reproducible CSV/JSON emission, and small utilities
//! for inspecting densities, orbits, and diagnostics.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod report;

use std::path::PathBuf;

/// Split by exit code: config mistakes exit 2, numeric failures from the
/// core library exit 3. I/O problems count as config mistakes since the
/// offending paths come from user input.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("numeric: {0}")]
    Numeric(#[from] lab_core::Error),
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::Io { .. } => 2,
            LabError::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
