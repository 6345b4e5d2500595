//! Centralized Dion: warm-started power iteration with error feedback.

use serde::{Deserialize, Serialize};

use super::error::{check_shape, OptimError};
use crate::linalg::{
    column_norms_squared, householder_qr, matmul, truncated_svd, DenseMatrix, FlopSink, LinalgError,
};
use crate::mesh::{CostLedger, FlopPhase};
use crate::rng::{self, Purpose};

/// Which side of the weight the power iteration warm-starts on.
///
/// `Standard` keeps an `n×r` right basis. `Transposed` runs the iteration on
/// `Bᵀ` and keeps an `m×r` basis; the distributed version uses it for weights
/// whose tensor-parallel split falls on the second dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    Standard,
    Transposed,
}

/// How the rank-`r` factors of `B` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowRankMethod {
    #[default]
    PowerIteration,
    /// Exact top-`r` left singular vectors. Ignores the warm start.
    TruncatedSvd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DionConfig {
    pub learning_rate: f64,
    pub momentum_decay: f64,
    pub rank: usize,
    pub oversampling_factor: f64,
    pub epsilon_col: f64,
    pub weight_decay: f64,
    /// When false, momentum is `μM + G` and the residual is discarded.
    pub error_feedback: bool,
    pub low_rank: LowRankMethod,
}

impl Default for DionConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum_decay: 0.95,
            rank: 1,
            oversampling_factor: 1.25,
            epsilon_col: 1e-30,
            weight_decay: 0.0,
            error_feedback: true,
            low_rank: LowRankMethod::PowerIteration,
        }
    }
}

impl DionConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |field, reason: String| Err(OptimError::InvalidConfig { field, reason });
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate", format!("must be nonnegative, got {}", self.learning_rate));
        }
        if !(self.momentum_decay > 0.0 && self.momentum_decay < 1.0) {
            return bad("momentum_decay", format!("must be in (0, 1), got {}", self.momentum_decay));
        }
        if self.rank == 0 {
            return bad("rank", "must be at least 1".into());
        }
        if !(self.oversampling_factor >= 1.0) {
            return bad(
                "oversampling_factor",
                format!("must be at least 1, got {}", self.oversampling_factor),
            );
        }
        if !(self.epsilon_col > 0.0) {
            return bad("epsilon_col", format!("must be positive, got {}", self.epsilon_col));
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay", format!("must be nonnegative, got {}", self.weight_decay));
        }
        Ok(())
    }

    /// Sketch height `⌈oversampling_factor · r⌉`.
    pub fn sketch_rows(&self) -> usize {
        sketch_rows(self.oversampling_factor, self.rank)
    }

    pub(crate) fn validate_for(&self, m: usize, n: usize) -> Result<(), OptimError> {
        self.validate()?;
        if self.rank > m.min(n) {
            return Err(OptimError::InvalidConfig {
                field: "rank",
                reason: format!("rank {} exceeds min({m}, {n})", self.rank),
            });
        }
        Ok(())
    }
}

pub fn sketch_rows(oversampling_factor: f64, rank: usize) -> usize {
    // a tiny slack keeps exact products such as 1.25·4 from rounding up
    ((oversampling_factor * rank as f64) - 1e-9).ceil().max(rank as f64) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct DionState {
    pub x: DenseMatrix,
    pub m_buf: DenseMatrix,
    /// `n×r` for [`Orientation::Standard`], `m×r` for [`Orientation::Transposed`].
    pub q: DenseMatrix,
    pub orientation: Orientation,
    pub seed: u64,
    /// Completed steps; addresses the per-step random streams.
    pub step: u64,
}

impl DionState {
    pub fn new(x: DenseMatrix, rank: usize, seed: u64, orientation: Orientation) -> Self {
        let (m, n) = x.shape();
        let basis_rows = match orientation {
            Orientation::Standard => n,
            Orientation::Transposed => m,
        };
        Self {
            m_buf: DenseMatrix::zeros(m, n),
            q: init_basis(seed, basis_rows, rank),
            x,
            orientation,
            seed,
            step: 0,
        }
    }

    /// Optimizer state size: momentum plus the warm-start basis.
    pub fn state_elements(&self) -> usize {
        self.m_buf.len() + self.q.len()
    }
}

/// Seeded standard-normal `rows×r` matrix with unit columns.
pub fn init_basis(seed: u64, rows: usize, rank: usize) -> DenseMatrix {
    init_basis_at(seed, 0, rows, rank)
}

/// [`init_basis`] drawn from stream `index`, for parameters that keep several bases.
pub fn init_basis_at(seed: u64, index: u64, rows: usize, rank: usize) -> DenseMatrix {
    column_normalize(&rng::normal_matrix(seed, Purpose::BasisInit, index, rows, rank), 1e-30)
}

/// Divides every column by `max(‖column‖₂, epsilon)`.
pub fn column_normalize(r: &DenseMatrix, epsilon: f64) -> DenseMatrix {
    let norms: Vec<f64> = column_norms_squared(r).into_iter().map(|s| s.sqrt().max(epsilon)).collect();
    divide_columns(r, &norms)
}

pub(crate) fn divide_columns(r: &DenseMatrix, norms: &[f64]) -> DenseMatrix {
    DenseMatrix::from_fn(r.rows(), r.cols(), |i, j| r.get(i, j) / norms[j])
}

/// One warm-started power iteration: `P = orth(B·Q)`, `R = Bᵀ·P`.
pub fn power_iter1<F: FlopSink + ?Sized>(
    b: &DenseMatrix,
    q_prev: &DenseMatrix,
    flops: &mut F,
) -> Result<(DenseMatrix, DenseMatrix), LinalgError> {
    let bq = matmul(b, q_prev, false, false, flops)?;
    let p = householder_qr(&bq, flops)?.q;
    let r = matmul(b, &p, true, false, flops)?;
    Ok((p, r))
}

fn low_rank_factors(
    b_op: &DenseMatrix,
    q: &DenseMatrix,
    method: LowRankMethod,
    rank: usize,
    ledger: &mut CostLedger,
) -> Result<(DenseMatrix, DenseMatrix), LinalgError> {
    match method {
        LowRankMethod::PowerIteration => {
            let bq = matmul(b_op, q, false, false, &mut ledger.device(0, FlopPhase::PowerIteration))?;
            let p = householder_qr(&bq, &mut ledger.device(0, FlopPhase::Orthogonalization))?.q;
            let r = matmul(b_op, &p, true, false, &mut ledger.device(0, FlopPhase::PowerIteration))?;
            Ok((p, r))
        }
        LowRankMethod::TruncatedSvd => {
            let p = truncated_svd(b_op, rank)?.u;
            let r = matmul(b_op, &p, true, false, &mut ledger.device(0, FlopPhase::PowerIteration))?;
            Ok((p, r))
        }
    }
}

/// One centralized Dion step.
///
/// With `B = M + G` and the power iteration run on `B` (or `Bᵀ` when
/// transposed): `M' = B − (1−μ)·PRᵀ`, `Q' = ColumnNormalize(R)`,
/// `X' = (1 − η·wd)·X − η·√(m/n)·PQ'ᵀ`.
///
/// If `B·Q` is exactly rank deficient the offending basis column is redrawn
/// from the step's stream and the iteration retried once. If that also fails
/// the matrix update is skipped: weight decay still applies, `M' = B`, and the
/// basis is kept.
pub fn dion_step_centralized(
    state: &DionState,
    grad: &DenseMatrix,
    cfg: &DionConfig,
    ledger: &mut CostLedger,
) -> Result<DionState, OptimError> {
    let (m, n) = state.x.shape();
    cfg.validate_for(m, n)?;
    check_shape("grad", (m, n), grad.shape())?;
    check_shape("momentum", (m, n), state.m_buf.shape())?;
    let transposed = state.orientation == Orientation::Transposed;
    let basis_rows = if transposed { m } else { n };
    check_shape("basis", (basis_rows, cfg.rank), state.q.shape())?;

    let mu = cfg.momentum_decay;
    let b = if cfg.error_feedback {
        state.m_buf.add(grad)?
    } else {
        let mut b = state.m_buf.scale(mu);
        b.add_scaled(1.0, grad)?;
        b
    };
    let b_op = if transposed { b.transpose() } else { b.clone() };

    let mut q_prev = state.q.clone();
    let mut factors = low_rank_factors(&b_op, &q_prev, cfg.low_rank, cfg.rank, ledger);
    if let Err(LinalgError::RankDeficient { column }) = factors {
        let fresh = rng::normal_matrix(state.seed, Purpose::Rerandomize, state.step, basis_rows, 1);
        let fresh = column_normalize(&fresh, cfg.epsilon_col);
        for i in 0..basis_rows {
            q_prev.set(i, column, fresh.get(i, 0));
        }
        factors = low_rank_factors(&b_op, &q_prev, cfg.low_rank, cfg.rank, ledger);
    }
    let decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
    let (p, r) = match factors {
        Ok(f) => f,
        Err(LinalgError::RankDeficient { .. }) => {
            return Ok(DionState {
                x: state.x.scale(decay),
                m_buf: b,
                q: state.q.clone(),
                orientation: state.orientation,
                seed: state.seed,
                step: state.step + 1,
            });
        }
        Err(e) => return Err(e.into()),
    };

    // P·Rᵀ in native orientation: P is m×r standard, n×r transposed.
    let approx = if transposed {
        matmul(&r, &p, false, true, &mut ledger.device(0, FlopPhase::ErrorFeedback))?
    } else {
        matmul(&p, &r, false, true, &mut ledger.device(0, FlopPhase::ErrorFeedback))?
    };
    let m_next = if cfg.error_feedback {
        let mut mb = b;
        mb.add_scaled(-(1.0 - mu), &approx)?;
        mb
    } else {
        b
    };

    let q_next = column_normalize(&r, cfg.epsilon_col);
    let update = if transposed {
        matmul(&q_next, &p, false, true, &mut ledger.device(0, FlopPhase::WeightUpdate))?
    } else {
        matmul(&p, &q_next, false, true, &mut ledger.device(0, FlopPhase::WeightUpdate))?
    };
    let mut x = state.x.scale(decay);
    x.add_scaled(-cfg.learning_rate * (m as f64 / n as f64).sqrt(), &update)?;

    Ok(DionState {
        x,
        m_buf: m_next,
        q: q_next,
        orientation: state.orientation,
        seed: state.seed,
        step: state.step + 1,
    })
}
