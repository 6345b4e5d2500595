use thiserror::Error;

/// Failure modes of the dense kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("data length {got} does not match {rows}x{cols}")]
    InvalidData { rows: usize, cols: usize, got: usize },

    #[error("{op}: expected rows >= cols, got {rows}x{cols}")]
    NotTall {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("{op}: expected a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("QR: column {column} is zero after reflection (rank deficient input)")]
    RankDeficient { column: usize },

    #[error("Cholesky: matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("Cholesky: non-positive pivot at index {pivot}")]
    NotPositiveDefinite { pivot: usize },

    #[error("triangular solve: zero diagonal entry at index {index}")]
    SingularTriangular { index: usize },

    #[error("rank {rank} outside 1..={max}")]
    InvalidRank { rank: usize, max: usize },

    #[error("SVD: no convergence after {sweeps} Jacobi sweeps")]
    NoConvergence { sweeps: usize },

    #[error("cannot normalize a zero matrix")]
    ZeroMatrix,
}
