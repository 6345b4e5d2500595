//! Upper Cholesky factor and right triangular solves.

use super::error::LinalgError;
use super::flops::{self, FlopSink};
use super::matrix::DenseMatrix;

const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Upper triangular `R` with `RᵀR = h`. Reports `n³/3` FLOPs.
pub fn cholesky_upper<F: FlopSink + ?Sized>(
    h: &DenseMatrix,
    flops: &mut F,
) -> Result<DenseMatrix, LinalgError> {
    let (n, cols) = h.shape();
    if n != cols {
        return Err(LinalgError::NotSquare {
            op: "cholesky_upper",
            rows: n,
            cols,
        });
    }
    let scale = h.max_abs().max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            if (h.get(i, j) - h.get(j, i)).abs() > SYMMETRY_TOLERANCE * scale {
                return Err(LinalgError::NotSymmetric { row: i, col: j });
            }
        }
    }

    let mut r = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = h.get(j, j);
        for k in 0..j {
            pivot -= r.get(k, j) * r.get(k, j);
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: j });
        }
        let d = pivot.sqrt();
        r.set(j, j, d);
        for i in j + 1..n {
            let mut s = h.get(j, i);
            for k in 0..j {
                s -= r.get(k, j) * r.get(k, i);
            }
            r.set(j, i, s / d);
        }
    }
    flops.add_flops(flops::cholesky(n));
    Ok(r)
}

/// Solves `X · r = a` for `X`, with `r` upper triangular. Reports `m·n²` FLOPs.
pub fn solve_upper_triangular_right<F: FlopSink + ?Sized>(
    a: &DenseMatrix,
    r: &DenseMatrix,
    flops: &mut F,
) -> Result<DenseMatrix, LinalgError> {
    let (n, rc) = r.shape();
    if n != rc {
        return Err(LinalgError::NotSquare {
            op: "solve_upper_triangular_right",
            rows: n,
            cols: rc,
        });
    }
    if a.cols() != n {
        return Err(LinalgError::DimensionMismatch {
            op: "solve_upper_triangular_right",
            left: a.shape(),
            right: r.shape(),
        });
    }
    if let Some(index) = (0..n).find(|&i| r.get(i, i) == 0.0) {
        return Err(LinalgError::SingularTriangular { index });
    }

    let m = a.rows();
    let mut x = DenseMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let mut s = a.get(i, j);
            for p in 0..j {
                s -= x.get(i, p) * r.get(p, j);
            }
            x.set(i, j, s / r.get(j, j));
        }
    }
    flops.add_flops(flops::triangular_solve(m, n));
    Ok(x)
}
