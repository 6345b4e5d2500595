//! Per-step metrics and their CSV form.

use std::io::Write;

use dion_core::mesh::LedgerSnapshot;
use serde::Serialize;

/// Column order of every metrics file.
pub const HEADER: [&str; 8] = [
    "step",
    "loss",
    "grad_norm",
    "update_spectral_norm",
    "dp_elements",
    "fs_elements",
    "tp_elements",
    "flops",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRow {
    pub step: usize,
    /// Loss at the parameters the step's gradient was taken at.
    pub loss: f64,
    /// Frobenius norm of the full gradient over all parameters.
    pub grad_norm: f64,
    /// Largest singular value of the matrix parameter's update.
    pub update_spectral_norm: f64,
    /// Traffic and per-device FLOPs of this step alone.
    pub ledger: LedgerSnapshot,
}

/// Shortest round-trip scientific notation, so files are byte-stable.
pub fn fmt_float(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_csv<W: Write>(out: W, rows: &[MetricsRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            fmt_float(r.loss),
            fmt_float(r.grad_norm),
            fmt_float(r.update_spectral_norm),
            r.ledger.dp_elements.to_string(),
            r.ledger.fs_elements.to_string(),
            r.ledger.tp_elements.to_string(),
            r.ledger.flops.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
