//! Dion, a low-rank orthonormalized optimizer, with its distributed variants
//! running on a simulated DP × FS × TP device mesh.
//!
//! Every kernel is single-threaded with a fixed accumulation order, so runs
//! are bit-reproducible from their seeds.

pub mod accounting;
pub mod checkpoint;
pub mod dist;
pub mod linalg;
pub mod mesh;
pub mod optim;
pub mod rng;
