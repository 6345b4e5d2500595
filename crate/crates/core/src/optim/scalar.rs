//! Element-wise optimizers for non-matrix parameters: Lion and AdamW.

use serde::{Deserialize, Serialize};

use super::error::{check_shape, OptimError};
use super::scaling::{lr_scale_factor, ParamSpec};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarAlgorithm {
    AdamW,
    Lion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarOptimConfig {
    pub algorithm: ScalarAlgorithm,
    pub beta1: f64,
    pub beta2: f64,
    pub base_learning_rate: f64,
    pub weight_decay: f64,
    pub adam_epsilon: f64,
    /// AdamW only: use this rate as-is instead of `base × lr_scale_factor`.
    #[serde(default)]
    pub literal_learning_rate: Option<f64>,
}

impl ScalarOptimConfig {
    pub fn adamw(base_learning_rate: f64) -> Self {
        Self {
            algorithm: ScalarAlgorithm::AdamW,
            beta1: 0.9,
            beta2: 0.95,
            base_learning_rate,
            weight_decay: 0.0,
            adam_epsilon: 1e-8,
            literal_learning_rate: None,
        }
    }

    pub fn lion(base_learning_rate: f64) -> Self {
        Self {
            algorithm: ScalarAlgorithm::Lion,
            beta1: 0.95,
            beta2: 0.98,
            base_learning_rate,
            weight_decay: 0.0,
            adam_epsilon: 1e-8,
            literal_learning_rate: None,
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |field, reason: String| Err(OptimError::InvalidConfig { field, reason });
        for (field, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(beta > 0.0 && beta < 1.0) {
                return bad(field, format!("must be in (0, 1), got {beta}"));
            }
        }
        if !(self.base_learning_rate >= 0.0) {
            return bad("base_learning_rate", format!("must be nonnegative, got {}", self.base_learning_rate));
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay", format!("must be nonnegative, got {}", self.weight_decay));
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon", format!("must be positive, got {}", self.adam_epsilon));
        }
        Ok(())
    }

    /// Effective learning rate for a parameter.
    pub fn learning_rate_for(&self, spec: &ParamSpec) -> f64 {
        match (self.algorithm, self.literal_learning_rate) {
            (ScalarAlgorithm::AdamW, Some(lr)) => lr,
            _ => self.base_learning_rate * lr_scale_factor(spec),
        }
    }

    pub fn with_base_learning_rate(mut self, lr: f64) -> Self {
        self.base_learning_rate = lr;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LionState {
    pub x: DenseMatrix,
    pub m_buf: DenseMatrix,
}

impl LionState {
    pub fn new(x: DenseMatrix) -> Self {
        let (r, c) = x.shape();
        Self {
            x,
            m_buf: DenseMatrix::zeros(r, c),
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `x' = (1 − η·wd)·x − η·sign(β1·m + (1−β1)·g)`, `m' = β2·m + (1−β2)·g`.
pub fn lion_step(
    state: &LionState,
    grad: &DenseMatrix,
    cfg: &ScalarOptimConfig,
    spec: &ParamSpec,
) -> Result<LionState, OptimError> {
    check_shape("grad", state.x.shape(), grad.shape())?;
    check_shape("momentum", state.x.shape(), state.m_buf.shape())?;
    let lr = cfg.learning_rate_for(spec);
    let decay = 1.0 - lr * cfg.weight_decay;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let dir = state.m_buf.zip_with(grad, "lion_step", |m, g| sign(b1 * m + (1.0 - b1) * g))?;
    let x = state.x.zip_with(&dir, "lion_step", |x, d| decay * x - lr * d)?;
    let m_buf = state.m_buf.zip_with(grad, "lion_step", |m, g| b2 * m + (1.0 - b2) * g)?;
    Ok(LionState { x, m_buf })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub x: DenseMatrix,
    pub m1: DenseMatrix,
    pub m2: DenseMatrix,
    pub t: u64,
}

impl AdamWState {
    pub fn new(x: DenseMatrix) -> Self {
        let (r, c) = x.shape();
        Self {
            x,
            m1: DenseMatrix::zeros(r, c),
            m2: DenseMatrix::zeros(r, c),
            t: 0,
        }
    }

    pub fn state_elements(&self) -> usize {
        self.m1.len() + self.m2.len()
    }
}

/// Bias-corrected AdamW with decoupled weight decay.
pub fn adamw_step(
    state: &AdamWState,
    grad: &DenseMatrix,
    cfg: &ScalarOptimConfig,
    spec: &ParamSpec,
) -> Result<AdamWState, OptimError> {
    check_shape("grad", state.x.shape(), grad.shape())?;
    let lr = cfg.learning_rate_for(spec);
    let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    let t = state.t + 1;
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    let m1 = state.m1.zip_with(grad, "adamw_step", |m, g| b1 * m + (1.0 - b1) * g)?;
    let m2 = state.m2.zip_with(grad, "adamw_step", |v, g| b2 * v + (1.0 - b2) * g * g)?;
    let step = m1.zip_with(&m2, "adamw_step", |m, v| (m / c1) / ((v / c2).sqrt() + eps))?;
    let decay = 1.0 - lr * cfg.weight_decay;
    let x = state.x.zip_with(&step, "adamw_step", |x, s| decay * x - lr * s)?;
    Ok(AdamWState { x, m1, m2, t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::ParamKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bias(n: usize) -> ParamSpec {
        ParamSpec::new(ParamKind::Bias, n, 1)
    }

    #[test]
    fn lion_zero_is_inert() {
        let x = DenseMatrix::from_vec(3, 1, vec![1.0, -2.0, 0.5]).unwrap();
        let cfg = ScalarOptimConfig {
            weight_decay: 0.1,
            ..ScalarOptimConfig::lion(0.01)
        };
        let next = lion_step(&LionState::new(x.clone()), &DenseMatrix::zeros(3, 1), &cfg, &bias(3)).unwrap();
        assert_eq!(next.x, x.scale(1.0 - 0.01 * 0.1));
    }

    #[test]
    fn lion_saturates() {
        let g = DenseMatrix::from_vec(4, 1, vec![0.1, 3.0, 1e-9, 7.0]).unwrap();
        let cfg = ScalarOptimConfig::lion(0.02);
        let next = lion_step(&LionState::new(DenseMatrix::zeros(4, 1)), &g, &cfg, &bias(4)).unwrap();
        assert!(next.x.as_slice().iter().all(|&v| v == -0.02));
        let rms = (next.x.as_slice().iter().map(|v| (v / 0.02).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert_eq!(rms, 1.0);
    }

    #[test]
    fn lion_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DenseMatrix::random_normal(3, 4, &mut rng);
        let m = DenseMatrix::random_normal(3, 4, &mut rng);
        let g = DenseMatrix::random_normal(3, 4, &mut rng);
        let spec = ParamSpec::new(ParamKind::Unembedding, 3, 16);
        let cfg = ScalarOptimConfig {
            weight_decay: 0.05,
            ..ScalarOptimConfig::lion(0.1)
        };
        let next = lion_step(&LionState { x: x.clone(), m_buf: m.clone() }, &g, &cfg, &spec).unwrap();
        let lr = 0.1 * 0.25;
        for i in 0..x.len() {
            let blend = 0.95 * m.as_slice()[i] + 0.05 * g.as_slice()[i];
            let d = if blend > 0.0 { 1.0 } else { -1.0 };
            assert_eq!(next.x.as_slice()[i], (1.0 - lr * 0.05) * x.as_slice()[i] - lr * d);
            assert_eq!(next.m_buf.as_slice()[i], 0.98 * m.as_slice()[i] + (1.0 - 0.98) * g.as_slice()[i]);
        }
    }

    #[test]
    fn adamw_zero_is_inert() {
        let x = DenseMatrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let cfg = ScalarOptimConfig {
            weight_decay: 0.1,
            ..ScalarOptimConfig::adamw(0.01)
        };
        let next = adamw_step(&AdamWState::new(x.clone()), &DenseMatrix::zeros(2, 1), &cfg, &bias(2)).unwrap();
        assert_eq!(next.x, x.scale(1.0 - 0.001));
    }

    #[test]
    fn adamw_constant_gradient_tends_to_sign() {
        let g = DenseMatrix::from_vec(2, 1, vec![0.3, -5.0]).unwrap();
        let cfg = ScalarOptimConfig::adamw(0.01);
        let mut s = AdamWState::new(DenseMatrix::zeros(2, 1));
        for _ in 0..200 {
            let prev = s.x.clone();
            s = adamw_step(&s, &g, &cfg, &bias(2)).unwrap();
            let d = s.x.sub(&prev).unwrap();
            assert!((d.get(0, 0) + 0.01).abs() < 1e-6 && (d.get(1, 0) - 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn adamw_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = DenseMatrix::random_normal(2, 3, &mut rng);
        let g = DenseMatrix::random_normal(2, 3, &mut rng);
        let spec = ParamSpec::new(ParamKind::Weight, 2, 8);
        let cfg = ScalarOptimConfig {
            weight_decay: 0.01,
            ..ScalarOptimConfig::adamw(0.1)
        };
        let next = adamw_step(&AdamWState::new(x.clone()), &g, &cfg, &spec).unwrap();
        let lr = 0.1 * 0.5;
        for i in 0..x.len() {
            let gi = g.as_slice()[i];
            let m = (0.1 * gi) / 0.1;
            let v = (0.05 * gi * gi) / 0.05;
            let want = (1.0 - lr * 0.01) * x.as_slice()[i] - lr * m / (v.sqrt() + 1e-8);
            assert!((next.x.as_slice()[i] - want).abs() <= 1e-15 * want.abs().max(1.0));
        }

        let literal = ScalarOptimConfig {
            literal_learning_rate: Some(0.003),
            ..cfg
        };
        assert_eq!(literal.learning_rate_for(&spec), 0.003);
    }
}
