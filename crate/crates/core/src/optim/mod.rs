//! Centralized optimizers and per-parameter learning-rate scaling.

mod dion;
mod error;
mod muon;
mod scalar;
mod scaling;
mod schedule;

pub use dion::{
    column_normalize, dion_step_centralized, init_basis, init_basis_at, power_iter1, sketch_rows, DionConfig, DionState,
    LowRankMethod, Orientation,
};
pub(crate) use dion::divide_columns;
pub use error::OptimError;
pub use muon::{muon_step, MuonConfig, MuonState};
pub use scalar::{adamw_step, lion_step, AdamWState, LionState, ScalarAlgorithm, ScalarOptimConfig};
pub use scaling::{lr_scale_factor, ParamKind, ParamSpec};
pub use schedule::Schedule;
