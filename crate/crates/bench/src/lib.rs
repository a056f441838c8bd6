//! Experiment runner: training runs, SE sweeps over the number of active
//! elements, runtime benchmarks and SVG plots, all with provenance-stamped
//! CSV output.

pub mod artifacts;
pub mod config;
pub mod experiments;
pub mod plot;

use hris_core::ppo::PpoError;
use hris_core::EnvError;
use thiserror::Error;

pub use config::{ExperimentConfig, Profile};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl BenchError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Numeric(_) => 3,
            BenchError::MissingArtifact(_) => 4,
            BenchError::Io { .. } => 1,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<EnvError> for BenchError {
    fn from(e: EnvError) -> Self {
        BenchError::Numeric(e.to_string())
    }
}

impl From<PpoError> for BenchError {
    fn from(e: PpoError) -> Self {
        match e {
            PpoError::InvalidHyper(m) => BenchError::Config(m),
            PpoError::Checkpoint(m) => BenchError::MissingArtifact(format!("unreadable checkpoint: {m}")),
            other => BenchError::Numeric(other.to_string()),
        }
    }
}
