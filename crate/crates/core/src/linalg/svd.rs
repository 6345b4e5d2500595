//! Truncated SVD by one-sided Jacobi rotations.
//!
//! Used as a reference for low-rank approximations and as the SVD arm of the
//! ablations; accuracy matters here, speed does not.

use super::error::LinalgError;
use super::matrix::DenseMatrix;

const MAX_SWEEPS: usize = 80;
const ORTHOGONALITY_TOLERANCE: f64 = 1e-15;

/// Rank-`r` singular triplets, singular values nonincreasing.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// `m×r`, orthonormal columns.
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    /// `n×r`, orthonormal columns.
    pub v: DenseMatrix,
}

impl TruncatedSvd {
    /// `u · diag(s) · vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let us = DenseMatrix::from_fn(self.u.rows(), self.u.cols(), |i, j| {
            self.u.get(i, j) * self.s[j]
        });
        super::matrix::matmul(&us, &self.v, false, true, &mut super::flops::NoFlops)
            .expect("factors are conformable")
    }
}

pub fn truncated_svd(a: &DenseMatrix, rank: usize) -> Result<TruncatedSvd, LinalgError> {
    let max = a.rows().min(a.cols());
    if rank == 0 || rank > max {
        return Err(LinalgError::InvalidRank { rank, max });
    }
    if a.rows() < a.cols() {
        let t = truncated_svd(&a.transpose(), rank)?;
        return Ok(TruncatedSvd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }

    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DenseMatrix::identity(n);
    let mut converged = false;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (wp, wq) = (w.get(i, p), w.get(i, q));
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == 0.0 || gamma.abs() <= ORTHOGONALITY_TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
    order.truncate(rank);

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let floor = s[0] * 1e-14;
    let mut u = DenseMatrix::zeros(m, rank);
    let mut vt = DenseMatrix::zeros(n, rank);
    let mut missing = Vec::new();
    for (col, &j) in order.iter().enumerate() {
        for i in 0..n {
            vt.set(i, col, v.get(i, j));
        }
        if norms[j] > floor && norms[j] > 0.0 {
            for i in 0..m {
                u.set(i, col, w.get(i, j) / norms[j]);
            }
        } else {
            missing.push(col);
        }
    }
    complete_basis(&mut u, &missing);
    Ok(TruncatedSvd { u, s, v: vt })
}

fn rotate_columns(a: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.rows() {
        let (x, y) = (a.get(i, p), a.get(i, q));
        a.set(i, p, c * x - s * y);
        a.set(i, q, s * x + c * y);
    }
}

/// Fills the listed columns with unit vectors orthogonal to all others, by
/// Gram–Schmidt over the standard basis.
fn complete_basis(u: &mut DenseMatrix, missing: &[usize]) {
    let m = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|c| !missing.contains(c)).collect();
    for &col in missing {
        for e in 0..m {
            let mut cand: Vec<f64> = (0..m).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
            for _ in 0..2 {
                for &f in &filled {
                    let d: f64 = (0..m).map(|i| cand[i] * u.get(i, f)).sum();
                    for (i, c) in cand.iter_mut().enumerate() {
                        *c -= d * u.get(i, f);
                    }
                }
            }
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for (i, c) in cand.iter().enumerate() {
                    u.set(i, col, c / norm);
                }
                filled.push(col);
                break;
            }
        }
    }
}
