//! Config-driven experiments for the SMTM sampler: presets, chain and limit
//! runs, CSV and SVG output, and the acceptance criteria.

// Range checks are written as negations so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod acceptance;
pub mod config;
pub mod presets;
pub mod runner;
pub mod svg;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown preset or missing config file `{0}`")]
    UnknownPreset(String),
    #[error("I/O failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for config problems, 3 for runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::UnknownPreset(_) => 2,
            Self::Io { .. } | Self::Runtime(_) => 3,
        }
    }
}
