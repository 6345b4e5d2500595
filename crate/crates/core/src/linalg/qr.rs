//! Householder QR with a nonnegative-diagonal sign convention.

use super::error::LinalgError;
use super::flops::{self, FlopSink};
use super::matrix::DenseMatrix;

/// Thin QR factorization `a = q · r`.
#[derive(Debug, Clone, PartialEq)]
pub struct QrResult {
    /// `m×n`, orthonormal columns.
    pub q: DenseMatrix,
    /// `n×n`, upper triangular with `r[k,k] ≥ 0`.
    pub r: DenseMatrix,
}

/// Householder QR of a tall matrix (`rows ≥ cols`).
///
/// Reflector signs are chosen for stability and then flipped so the diagonal
/// of `r` is nonnegative, which makes the factorization unique for full-rank
/// input. Reports `2mn² − (2/3)n³` FLOPs.
pub fn householder_qr<F: FlopSink + ?Sized>(
    a: &DenseMatrix,
    flops: &mut F,
) -> Result<QrResult, LinalgError> {
    let (m, n) = a.shape();
    if m < n {
        return Err(LinalgError::NotTall {
            op: "householder_qr",
            rows: m,
            cols: n,
        });
    }

    let mut work = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut diag = vec![0.0; n];

    for k in 0..n {
        let mut v: Vec<f64> = (k..m).map(|i| work.get(i, k)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(LinalgError::RankDeficient { column: k });
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= vnorm);

        for j in k..n {
            let d: f64 = v.iter().enumerate().map(|(t, vi)| vi * work.get(k + t, j)).sum();
            for (t, vi) in v.iter().enumerate() {
                work[(k + t, j)] -= 2.0 * d * vi;
            }
        }
        diag[k] = alpha;
        reflectors.push(v);
    }

    let mut r = DenseMatrix::zeros(n, n);
    for i in 0..n {
        r.set(i, i, diag[i]);
        for j in i + 1..n {
            r.set(i, j, work.get(i, j));
        }
    }

    // Q = H_0 H_1 … H_{n-1} [I; 0], applied right to left.
    let mut q = DenseMatrix::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
    for (k, v) in reflectors.iter().enumerate().rev() {
        for j in 0..n {
            let d: f64 = v.iter().enumerate().map(|(t, vi)| vi * q.get(k + t, j)).sum();
            if d != 0.0 {
                for (t, vi) in v.iter().enumerate() {
                    q[(k + t, j)] -= 2.0 * d * vi;
                }
            }
        }
    }

    for k in 0..n {
        if r.get(k, k) < 0.0 {
            for j in k..n {
                r[(k, j)] = -r.get(k, j);
            }
            for i in 0..m {
                q[(i, k)] = -q.get(i, k);
            }
        }
    }

    flops.add_flops(flops::householder_qr(m, n));
    Ok(QrResult { q, r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::flops::NoFlops;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_is_fixed() {
        let qr = householder_qr(&DenseMatrix::identity(4), &mut NoFlops).unwrap();
        assert_eq!(qr.q, DenseMatrix::identity(4));
        assert_eq!(qr.r, DenseMatrix::identity(4));
    }

    #[test]
    fn single_reflection() {
        let a = DenseMatrix::from_rows(&[&[3.0], &[4.0]]);
        let qr = householder_qr(&a, &mut NoFlops).unwrap();
        assert!((qr.q.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((qr.q.get(1, 0) - 0.8).abs() < 1e-15);
        assert!((qr.r.get(0, 0) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn random_full_rank_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DenseMatrix::random_normal(10, 4, &mut rng);
        let mut count = 0u64;
        let qr = householder_qr(&a, &mut count).unwrap();
        assert!(qr.q.orthonormality_error() < 1e-12);
        let rec = qr.q.dot(&qr.r);
        assert!(rec.sub(&a).unwrap().frobenius_norm() / a.frobenius_norm() < 1e-12);
        for i in 0..4 {
            assert!(qr.r.get(i, i) >= 0.0);
            for j in 0..i {
                assert_eq!(qr.r.get(i, j), 0.0);
            }
        }
        // 2·10·16 − (2/3)·64 = 277.33
        assert_eq!(count, 277);
    }

    #[test]
    fn zero_column_reports_index() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]);
        // column 1 is parallel to column 0 and vanishes after the first reflection
        assert_eq!(
            householder_qr(&a, &mut NoFlops).unwrap_err(),
            LinalgError::RankDeficient { column: 1 }
        );
    }

    #[test]
    fn wide_input_rejected() {
        assert!(matches!(
            householder_qr(&DenseMatrix::zeros(2, 3), &mut NoFlops),
            Err(LinalgError::NotTall { .. })
        ));
    }
}
