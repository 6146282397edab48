//! Config-driven experiment runner for the `fracmag` library: parses an
//! experiment file, runs one pipeline or all of them, and writes the report,
//! CSV plot data, flat-array dumps and a manifest.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod pipelines;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fracmag::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Core(e) => e.hint(),
            _ => None,
        }
    }
}

/// Process exit status: 0 when every gate passes, 2 on a gate failure, 1 on error.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_GATE: i32 = 2;
