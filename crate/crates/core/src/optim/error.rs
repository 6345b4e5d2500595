use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("{field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub(crate) fn check_shape(
    what: &'static str,
    expected: (usize, usize),
    got: (usize, usize),
) -> Result<(), OptimError> {
    if expected == got {
        Ok(())
    } else {
        Err(OptimError::Shape { what, expected, got })
    }
}
