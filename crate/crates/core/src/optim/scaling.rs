use serde::{Deserialize, Serialize};

/// Role of a parameter, which decides its learning-rate scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// `d_out × d_in` matrix.
    Weight,
    /// Vector of length `d_out`.
    Bias,
    /// One `d_out` column per token.
    Embedding,
    /// One `d_in` row per output.
    Unembedding,
    /// Scalars.
    Normalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub kind: ParamKind,
    pub d_out: usize,
    pub d_in: usize,
}

impl ParamSpec {
    pub fn new(kind: ParamKind, d_out: usize, d_in: usize) -> Self {
        Self { kind, d_out, d_in }
    }
}

/// Multiplier on the shared base learning rate for a parameter.
pub fn lr_scale_factor(spec: &ParamSpec) -> f64 {
    match spec.kind {
        ParamKind::Weight => (spec.d_out as f64 / spec.d_in as f64).sqrt(),
        ParamKind::Unembedding => 1.0 / (spec.d_in as f64).sqrt(),
        ParamKind::Bias | ParamKind::Embedding | ParamKind::Normalization => 1.0,
    }
}
