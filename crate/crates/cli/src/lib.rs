//! Batch front end for the `lemlab` binary: scenario files, experiment
//! drivers and their CSV/JSON/SVG outputs.

pub mod commands;
pub mod config;
pub mod svg;
pub mod verify;

use lemlab_core::conformal::ConformalError;
use lemlab_core::cplx_poly::PolyError;
use lemlab_core::lemniscate::LemniscateError;
use lemlab_core::pg_flow::FlowError;
use lemlab_core::theorem_lab::LabError;
use thiserror::Error;

pub use config::ScenarioConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Curve(#[from] ConformalError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Fit(#[from] LemniscateError),
    #[error(transparent)]
    Lab(#[from] LabError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io { .. } => EXIT_USAGE,
            CliError::Curve(ConformalError::Csv(_) | ConformalError::Io(_)) => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
