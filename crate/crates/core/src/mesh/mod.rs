//! Simulated device mesh, sharded matrices and collectives.
//!
//! A "device" is an array slot. Collectives are plain loops over slots that
//! also charge their volume to a [`CostLedger`].

mod collective;
mod error;
mod ledger;
mod sharded;
mod topology;

pub use collective::{all_gather, all_reduce, ReduceOp};
pub use error::MeshError;
pub use ledger::{CostLedger, DeviceFlops, FlopPhase, LedgerSnapshot};
pub use sharded::{Dim, ShardSpec, ShardedMatrix};
pub use topology::{Axis, Coord, DeviceMesh};
