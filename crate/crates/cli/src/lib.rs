//! Library side of the `collapse-lab` binary: configuration, artifact
//! plumbing (atomic writes, digests, manifests), shared train/report
//! pipeline, SVG rendering, and the subcommand implementations.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod pipeline;
pub mod plot;

use collapse_core::bound::BoundError;
use collapse_core::data::DataError;
use collapse_core::metrics::MetricsError;
use collapse_core::nn::{CheckpointError, NnError};
use collapse_core::optim::OptimError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad invocation or config; maps to exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Run(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
