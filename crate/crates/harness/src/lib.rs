//! Toy training tasks, equivalence checks, ablations and cost reports built on
//! `dion-core`. The `dion` binary is a thin CLI over this library.
//!
//! Every command is a pure function of its config and seed: re-running one
//! reproduces its output files byte for byte.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use dion_core::checkpoint::CheckpointError;
use dion_core::dist::DistError;
use dion_core::linalg::LinalgError;
use dion_core::mesh::MeshError;
use dion_core::optim::OptimError;
use serde::Serialize;
use thiserror::Error;

pub mod ablation;
pub mod config;
pub mod costs;
pub mod equivalence;
pub mod metrics;
pub mod tasks;
pub mod train;

pub use config::{ConfigError, OptimizerKind, RunConfig, TaskKind};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Dist(#[from] DistError),

    #[error(transparent)]
    Optim(#[from] OptimError),

    #[error(transparent)]
    Mesh(#[from] MeshError),

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("loss is not finite at step {step}")]
    Diverged { step: usize },
}

impl HarnessError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
        move |source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(HarnessError::io(path))
}

pub(crate) fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(HarnessError::io(path))
}
