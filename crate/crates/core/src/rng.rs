//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream selected by
//! `(seed, purpose, index)`, so independent consumers never share state and
//! a value can be regenerated from its address alone.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::DenseMatrix;

/// What a stream is used for. Part of the stream address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    /// Initial right factor `Q₀`.
    BasisInit = 1,
    /// Sketch matrices for randomized Cholesky QR; index is the step.
    Sketch = 2,
    /// Fresh columns after a degenerate power iteration; index is the step.
    Rerandomize = 3,
    /// Task data (targets, inputs).
    Task = 4,
    /// Per-replica gradient noise; index mixes step and replica.
    Gradient = 5,
    /// Initial weights.
    Weights = 6,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | (index & ((1 << 56) - 1)));
    rng
}

fn unit_open(bits: u64) -> f64 {
    // (0, 1]: never zero, so the logarithm below is finite
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal value at position `entry` of a stream, by Box–Muller on two
/// 64-bit words. Any subset of positions can be generated independently.
pub fn normal_at(rng: &mut ChaCha8Rng, entry: u64) -> f64 {
    rng.set_word_pos(4 * entry as u128);
    let u1 = unit_open(rng.next_u64());
    let u2 = unit_open(rng.next_u64());
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Standard normal matrix addressed by `(seed, purpose, index)`.
pub fn normal_matrix(seed: u64, purpose: Purpose, index: u64, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::random_normal(rows, cols, &mut stream(seed, purpose, index))
}
