use thiserror::Error;

use super::{Axis, Coord, Dim};
use crate::linalg::LinalgError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("mesh axis {axis} has size 0")]
    EmptyAxis { axis: Axis },

    #[error("cannot parse mesh {0:?}; expected DPxFSxTP")]
    Parse(String),

    #[error("rows and columns both sharded along {axis}")]
    SameAxis { axis: Axis },

    #[error("{dim:?} length {len} not divisible by {axis} size {size}")]
    Indivisible {
        dim: Dim,
        len: usize,
        axis: Axis,
        size: usize,
    },

    #[error("expected {expected} shards, got {got}")]
    ShardCount { expected: usize, got: usize },

    #[error("shard at {coord} has shape {got:?}, expected {expected:?}")]
    ShardShape {
        coord: Coord,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("full matrix has shape {got:?}, expected {expected:?}")]
    FullShape {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("collective shape mismatch: {first} has {first_shape:?}, {second} has {second_shape:?}")]
    ShapeMismatch {
        first: Coord,
        first_shape: (usize, usize),
        second: Coord,
        second_shape: (usize, usize),
    },

    #[error("cannot all-reduce along {axis}: the matrix is sharded along it")]
    ReduceAlongShardedAxis { axis: Axis },

    #[error("cannot gather {dim:?} along {axis}: that dimension is not sharded along it")]
    NotShardedAlong { axis: Axis, dim: Dim },

    #[error("{dim:?} is already sharded")]
    AlreadySharded { dim: Dim },

    #[error("operands live on different meshes")]
    MeshMismatch,

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
