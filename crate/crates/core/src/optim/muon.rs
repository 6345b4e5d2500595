//! Muon baseline: momentum orthogonalized by Newton–Schulz.

use serde::{Deserialize, Serialize};

use super::error::{check_shape, OptimError};
use crate::linalg::{newton_schulz, DenseMatrix, LinalgError, NewtonSchulzConfig};
use crate::mesh::{CostLedger, FlopPhase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MuonConfig {
    pub learning_rate: f64,
    pub momentum_decay: f64,
    pub newton_schulz: NewtonSchulzConfig,
    pub weight_decay: f64,
}

impl Default for MuonConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum_decay: 0.95,
            newton_schulz: NewtonSchulzConfig::default(),
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuonState {
    pub x: DenseMatrix,
    pub m_buf: DenseMatrix,
}

impl MuonState {
    pub fn new(x: DenseMatrix) -> Self {
        let (m, n) = x.shape();
        Self {
            x,
            m_buf: DenseMatrix::zeros(m, n),
        }
    }

    pub fn state_elements(&self) -> usize {
        self.m_buf.len()
    }
}

/// `M' = μM + G`, `X' = (1 − η·wd)·X − η·√(m/n)·NS(M')`.
///
/// A zero momentum has no orthogonalization; the matrix update is skipped.
/// FLOPs are charged to device 0.
pub fn muon_step(
    state: &MuonState,
    grad: &DenseMatrix,
    cfg: &MuonConfig,
    ledger: &mut CostLedger,
) -> Result<MuonState, OptimError> {
    let (m, n) = state.x.shape();
    check_shape("grad", (m, n), grad.shape())?;
    check_shape("momentum", (m, n), state.m_buf.shape())?;
    let mut m_buf = state.m_buf.scale(cfg.momentum_decay);
    m_buf.add_scaled(1.0, grad)?;
    let mut x = state.x.scale(1.0 - cfg.learning_rate * cfg.weight_decay);
    match newton_schulz(&m_buf, &cfg.newton_schulz, &mut ledger.device(0, FlopPhase::NewtonSchulz)) {
        Ok(o) => x.add_scaled(-cfg.learning_rate * (m as f64 / n as f64).sqrt(), &o)?,
        Err(LinalgError::ZeroMatrix) => {}
        Err(e) => return Err(e.into()),
    }
    Ok(MuonState { x, m_buf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{householder_qr, NoFlops};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_momentum_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = householder_qr(&DenseMatrix::random_normal(8, 4, &mut rng), &mut NoFlops).unwrap().q;
        let cfg = MuonConfig {
            learning_rate: 0.1,
            newton_schulz: NewtonSchulzConfig {
                iterations: 5,
                coefficients: NewtonSchulzConfig::CUBIC,
            },
            ..Default::default()
        };
        // Frobenius normalization scales an orthonormal 8×4 input by 1/2, so
        // the cubic needs its five steps to climb back to unit singular values.
        let next = muon_step(&MuonState::new(DenseMatrix::zeros(8, 4)), &q, &cfg, &mut CostLedger::new()).unwrap();
        let expected = q.scale(-0.1 * 2f64.sqrt());
        assert!(next.x.max_abs_diff(&expected) < 0.05 * 0.1 * 2f64.sqrt());
    }

    #[test]
    fn memoryless_momentum_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = DenseMatrix::random_normal(5, 3, &mut rng);
        let cfg = MuonConfig {
            momentum_decay: 0.0,
            ..Default::default()
        };
        let s0 = MuonState::new(DenseMatrix::zeros(5, 3));
        let s1 = muon_step(&s0, &g, &cfg, &mut CostLedger::new()).unwrap();
        let s2 = muon_step(&s1, &g, &cfg, &mut CostLedger::new()).unwrap();
        let d1 = s1.x.sub(&s0.x).unwrap();
        let d2 = s2.x.sub(&s1.x).unwrap();
        assert!(d1.max_abs_diff(&d2) < 1e-15);
    }

    #[test]
    fn ledger_counts_newton_schulz() {
        let (m, n) = (9u64, 4u64);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = DenseMatrix::random_normal(9, 4, &mut rng);
        let mut ledger = CostLedger::new();
        muon_step(&MuonState::new(DenseMatrix::zeros(9, 4)), &g, &MuonConfig::default(), &mut ledger).unwrap();
        assert_eq!(ledger.flops_per_device(), 20 * m * n * n + 10 * n * n * n);
        assert_eq!(ledger.phase_flops_per_device(FlopPhase::NewtonSchulz), ledger.flops_per_device());
    }

    #[test]
    fn zero_momentum_skips() {
        let x = DenseMatrix::identity(3);
        let next = muon_step(&MuonState::new(x.clone()), &DenseMatrix::zeros(3, 3), &MuonConfig::default(), &mut CostLedger::new())
            .unwrap();
        assert_eq!(next.x, x);
    }
}
