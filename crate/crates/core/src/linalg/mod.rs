//! Dense `f64` kernels.
//!
//! Everything here is single-threaded and accumulates in a fixed order, so
//! identical inputs produce identical bytes. Kernels that have a closed-form
//! FLOP count report it through a [`FlopSink`].

mod cholesky;
mod error;
pub mod flops;
mod matrix;
mod newton_schulz;
mod qr;
mod svd;

pub use cholesky::{cholesky_upper, solve_upper_triangular_right};
pub use error::LinalgError;
pub use flops::{FlopSink, NoFlops};
pub use matrix::{column_norms_squared, matmul, DenseMatrix};
pub use newton_schulz::{newton_schulz, NewtonSchulzConfig};
pub use qr::{householder_qr, QrResult};
pub use svd::{truncated_svd, TruncatedSvd};
