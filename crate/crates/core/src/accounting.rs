//! Closed-form FLOP, communication and memory models.
//!
//! Communication counts follow the ledger convention: each collective moves
//! the logical element count of its matrix over one axis, and an axis of size
//! one moves nothing. Element-wise work is excluded from FLOP counts.

use serde::{Deserialize, Serialize};

use crate::optim::sketch_rows;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModelInput {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub dp: usize,
    pub fs: usize,
    pub tp: usize,
    pub oversampling_factor: f64,
}

impl CostModelInput {
    pub fn new(m: usize, n: usize, r: usize, dp: usize, fs: usize, tp: usize) -> Self {
        Self {
            m,
            n,
            r,
            dp,
            fs,
            tp,
            oversampling_factor: 1.25,
        }
    }

    /// Sketch height `k = ⌈oversampling_factor · r⌉`.
    pub fn k(&self) -> usize {
        sketch_rows(self.oversampling_factor, self.r)
    }

    pub fn transposed(&self) -> Self {
        Self {
            m: self.n,
            n: self.m,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.m == 0 || self.n == 0 || self.r == 0 || self.dp == 0 || self.fs == 0 || self.tp == 0 {
            return Err("all sizes must be positive".into());
        }
        if self.r > self.m.min(self.n) {
            return Err(format!("rank {} exceeds min({}, {})", self.r, self.m, self.n));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPrediction {
    pub dion_flops_per_device: f64,
    pub muon_flops: f64,
    pub dion_dp_elements: u64,
    pub dion_fs_elements: u64,
    pub dion_tp_elements: u64,
    /// TP volume with the idealized `k = 1.25r`: `2nr + 2.25r²`.
    pub dion_tp_elements_idealized: f64,
    pub muon_dp_elements: u64,
    pub muon_fs_elements: u64,
    pub muon_tp_elements: u64,
    pub adam_dp_elements: u64,
    pub adam_fs_elements: u64,
    pub adam_tp_elements: u64,
    pub dion_memory_elements: u64,
    pub muon_memory_elements: u64,
    pub adam_memory_elements: u64,
}

/// `8mnr/(fs·tp)`: the four rank-`r` products of one step on one device.
pub fn predict_dion_matmul_flops(inp: &CostModelInput) -> u64 {
    let (m, n, r) = (inp.m as u64, inp.n as u64, inp.r as u64);
    8 * m * n * r / (inp.fs as u64 * inp.tp as u64)
}

/// `8mnr/(fs·tp) + m(2kr + 4r²)/tp + 2kr² − r³/3` per device per step, with
/// the integer sketch height `k`. At `k = 1.25r` this is
/// `8mnr/(fs·tp) + 6.5·m·r²/tp + (13/6)·r³`.
pub fn predict_dion_flops(inp: &CostModelInput) -> f64 {
    let (m, n, r, k) = (inp.m as f64, inp.n as f64, inp.r as f64, inp.k() as f64);
    let (fs, tp) = (inp.fs as f64, inp.tp as f64);
    8.0 * m * n * r / (fs * tp) + m * (2.0 * k * r + 4.0 * r * r) / tp + 2.0 * k * r * r - r * r * r / 3.0
}

/// `20mn² + 10n³` with `m ≥ n`: five Newton–Schulz iterations, on every
/// device regardless of sharding.
pub fn predict_muon_flops(inp: &CostModelInput) -> f64 {
    let (m, n) = (inp.m.max(inp.n) as f64, inp.m.min(inp.n) as f64);
    20.0 * m * n * n + 10.0 * n * n * n
}

/// Flops of a full SVD, `16mn² + 8n³` with `m ≥ n`.
pub fn predict_svd_flops(m: usize, n: usize) -> f64 {
    let (m, n) = (m.max(n) as f64, m.min(n) as f64);
    16.0 * m * n * n + 8.0 * n * n * n
}

fn on_axis(size: usize, elements: u64) -> u64 {
    if size > 1 {
        elements
    } else {
        0
    }
}

/// Per-step traffic and state memory for one `m×n` weight in the standard layout.
pub fn predict_comm(inp: &CostModelInput) -> CostPrediction {
    let (m, n, r, k) = (inp.m as u64, inp.n as u64, inp.r as u64, inp.k() as u64);
    let rf = inp.r as f64;
    let mn = m * n;
    CostPrediction {
        dion_flops_per_device: predict_dion_flops(inp),
        muon_flops: predict_muon_flops(inp),
        dion_dp_elements: on_axis(inp.dp, (m + n) * r),
        dion_fs_elements: on_axis(inp.fs, (m + 1) * r),
        dion_tp_elements: on_axis(inp.tp, 2 * n * r + k * r + r * r),
        dion_tp_elements_idealized: if inp.tp > 1 {
            2.0 * inp.n as f64 * rf + 2.25 * rf * rf
        } else {
            0.0
        },
        muon_dp_elements: on_axis(inp.dp, mn),
        muon_fs_elements: on_axis(inp.fs, mn),
        muon_tp_elements: on_axis(inp.tp, mn),
        adam_dp_elements: on_axis(inp.dp, mn),
        adam_fs_elements: 0,
        adam_tp_elements: 0,
        dion_memory_elements: mn + n * r,
        muon_memory_elements: mn,
        adam_memory_elements: 2 * mn,
    }
}

/// [`predict_comm`] for the transposed layout, where the roles of `m` and `n` swap.
pub fn predict_comm_transposed(inp: &CostModelInput) -> CostPrediction {
    let mut p = predict_comm(&inp.transposed());
    p.dion_flops_per_device = predict_dion_flops(&inp.transposed());
    p
}

/// Total time spent on optimizer steps that every device repeats.
pub fn estimate_replicated_overhead(per_matrix_seconds: f64, matrices_per_stage: f64, steps: u64) -> f64 {
    per_matrix_seconds * matrices_per_stage * steps as f64
}

/// Matrices each pipeline stage owns when `blocks × matrices_per_block` are
/// split evenly over `stages`.
pub fn matrices_per_stage(blocks: usize, matrices_per_block: usize, stages: usize) -> f64 {
    (blocks * matrices_per_block) as f64 / stages as f64
}

pub fn seconds_to_days(seconds: f64) -> f64 {
    seconds / 86_400.0
}
