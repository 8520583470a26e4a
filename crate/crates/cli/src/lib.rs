//! Experiment harness behind the `vchr` binary: configuration, initial
//! conditions, energy-log/snapshot serialization, and the experiment
//! drivers (single runs, parameter sweeps, temporal refinement studies).

pub mod config;
pub mod convergence;
pub mod experiment;
pub mod ic;
pub mod snapshot;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("snapshot format error at byte {offset}: {what}")]
    SnapshotFormat { offset: u64, what: String },

    #[error(transparent)]
    Core(#[from] vchr_core::Error),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
