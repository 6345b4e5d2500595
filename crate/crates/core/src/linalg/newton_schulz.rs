//! Odd-polynomial Newton–Schulz iteration toward `U·Vᵀ`.

use serde::{Deserialize, Serialize};

use super::error::LinalgError;
use super::flops::FlopSink;
use super::matrix::{matmul, DenseMatrix};

/// Iteration count and the odd polynomial `c1·x + c2·x³ + c3·x⁵`.
///
/// The defaults are the quintic commonly shipped with Muon. They trade exact
/// convergence for speed: singular values settle in a band roughly
/// `[0.68, 1.2]` rather than at one. `(1.5, -0.5, 0.0)` gives the classic
/// cubic iteration, which converges to exactly orthogonal output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonSchulzConfig {
    pub iterations: usize,
    pub coefficients: (f64, f64, f64),
}

impl NewtonSchulzConfig {
    pub const CUBIC: (f64, f64, f64) = (1.5, -0.5, 0.0);
}

impl Default for NewtonSchulzConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            coefficients: (3.4445, -4.7750, 2.0315),
        }
    }
}

/// Normalizes `a` by its Frobenius norm and applies
/// `X ← c1·X + c2·X(XᵀX) + c3·X(XᵀX)²` on the tall orientation.
///
/// Reports `4mn² + 2n³` FLOPs per iteration (`m ≥ n`).
pub fn newton_schulz<F: FlopSink + ?Sized>(
    a: &DenseMatrix,
    cfg: &NewtonSchulzConfig,
    flops: &mut F,
) -> Result<DenseMatrix, LinalgError> {
    if a.rows() < a.cols() {
        return Ok(newton_schulz(&a.transpose(), cfg, flops)?.transpose());
    }
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Err(LinalgError::ZeroMatrix);
    }
    let (c1, c2, c3) = cfg.coefficients;
    let mut x = a.scale(1.0 / norm);
    for _ in 0..cfg.iterations {
        let gram = matmul(&x, &x, true, false, flops)?;
        let gram2 = matmul(&gram, &gram, false, false, flops)?;
        let poly = gram.zip_with(&gram2, "newton_schulz", |g, g2| c2 * g + c3 * g2)?;
        let mut next = matmul(&x, &poly, false, false, flops)?;
        next.add_scaled(c1, &x)?;
        x = next;
    }
    Ok(x)
}
