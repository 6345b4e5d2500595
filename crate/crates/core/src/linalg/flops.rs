//! FLOP reporting for the dense kernels.
//!
//! Every counted kernel takes a `&mut impl FlopSink` and reports the closed
//! form for the work it did. Elementwise work is never reported.

/// Receiver of FLOP counts.
pub trait FlopSink {
    fn add_flops(&mut self, flops: u64);
}

/// Discards every count.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoFlops;

impl FlopSink for NoFlops {
    fn add_flops(&mut self, _flops: u64) {}
}

impl FlopSink for u64 {
    fn add_flops(&mut self, flops: u64) {
        *self += flops;
    }
}

impl<S: FlopSink + ?Sized> FlopSink for &mut S {
    fn add_flops(&mut self, flops: u64) {
        (**self).add_flops(flops);
    }
}

/// `2·m·k·n` for an `m×k` by `k×n` product.
pub fn matmul(m: usize, k: usize, n: usize) -> u64 {
    2 * (m as u64) * (k as u64) * (n as u64)
}

/// `2·m·n² − (2/3)·n³`, rounded to the nearest integer.
pub fn householder_qr(m: usize, n: usize) -> u64 {
    let (m, n) = (m as f64, n as f64);
    (2.0 * m * n * n - 2.0 / 3.0 * n * n * n).round() as u64
}

/// `n³/3`, rounded to the nearest integer.
pub fn cholesky(n: usize) -> u64 {
    let n = n as f64;
    (n * n * n / 3.0).round() as u64
}

/// `m·n²`: one length-`n` triangular solve per row.
pub fn triangular_solve(m: usize, n: usize) -> u64 {
    (m as u64) * (n as u64) * (n as u64)
}
