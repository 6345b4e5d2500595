//! Side-by-side centralized and distributed Dion on identical gradient streams.

use std::fs::File;
use std::path::Path;

use dion_core::dist::{dion_step_transposed, dion_step_distributed, weight_spec, DistDionState};
use dion_core::linalg::DenseMatrix;
use dion_core::mesh::{Axis, CostLedger, DeviceMesh, ShardedMatrix};
use dion_core::optim::{dion_step_centralized, DionConfig, DionState, Orientation};
use dion_core::rng::{normal_matrix, Purpose};
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};
use crate::metrics::fmt_float;
use crate::{create_dir, write_json, HarnessError};

pub const REPORT_FILE: &str = "equivalence.json";
pub const SERIES_FILE: &str = "equivalence.csv";

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceRun {
    pub mesh: String,
    pub orientation: Orientation,
    /// Max-abs gap between distributed and centralized weights, per step.
    pub weight_divergence: Vec<f64>,
    /// Max-abs gap between the DP-mean momentum and the centralized momentum.
    pub momentum_divergence: Vec<f64>,
    pub max_weight_divergence: f64,
    pub max_momentum_divergence: f64,
    /// First zero-based step where either gap reached the tolerance.
    pub first_failing_step: Option<usize>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub steps: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub runs: Vec<EquivalenceRun>,
    pub pass: bool,
}

/// Gradient of DP replica `d` at `step`, shared by both sides.
fn replica_gradient(seed: u64, step: usize, d: usize, dp: usize, m: usize, n: usize) -> DenseMatrix {
    normal_matrix(seed, Purpose::Gradient, (step * dp + d) as u64, m, n)
}

fn run_one(
    cfg: &RunConfig,
    dion: &DionConfig,
    mesh: DeviceMesh,
    orientation: Orientation,
) -> Result<EquivalenceRun, HarnessError> {
    let e = &cfg.equivalence;
    let (m, n) = (e.m, e.n);
    let x0 = normal_matrix(cfg.seed, Purpose::Weights, 0, m, n);
    let mut central = DionState::new(x0.clone(), e.rank, cfg.seed, orientation);
    let mut dist = DistDionState::new(&x0, e.rank, cfg.seed, orientation, mesh)?;
    let dp = mesh.size(Axis::Dp);
    let (mut wd, mut md) = (Vec::with_capacity(e.steps), Vec::with_capacity(e.steps));

    for step in 0..e.steps {
        let grads: Vec<DenseMatrix> = (0..dp).map(|d| replica_gradient(cfg.seed, step, d, dp, m, n)).collect();
        let mut mean = grads[0].clone();
        for g in &grads[1..] {
            mean.add_scaled(1.0, g)?;
        }
        let mean = mean.scale(1.0 / dp as f64);
        central = dion_step_centralized(&central, &mean, dion, &mut CostLedger::new())?;
        let sharded = ShardedMatrix::shard_per_replica(&grads, weight_spec(m, n, orientation), mesh)?;
        let mut ledger = CostLedger::new();
        dist = match orientation {
            Orientation::Standard => dion_step_distributed(&dist, &sharded, dion, &mut ledger)?,
            Orientation::Transposed => dion_step_transposed(&dist, &sharded, dion, &mut ledger)?,
        };
        wd.push(dist.x.assemble().max_abs_diff(&central.x));
        md.push(dist.m_local.dp_mean().max_abs_diff(&central.m_buf));
    }

    let tol = e.tolerance;
    let first_failing_step = (0..e.steps).find(|&s| !(wd[s] < tol && md[s] < tol));
    Ok(EquivalenceRun {
        mesh: mesh.to_string(),
        orientation,
        max_weight_divergence: wd.iter().copied().fold(0.0, f64::max),
        max_momentum_divergence: md.iter().copied().fold(0.0, f64::max),
        weight_divergence: wd,
        momentum_divergence: md,
        first_failing_step,
        pass: first_failing_step.is_none(),
    })
}

/// Runs every configured mesh (and the transposed layout, when enabled).
pub fn verify_equivalence(cfg: &RunConfig) -> Result<EquivalenceReport, HarnessError> {
    let e = &cfg.equivalence;
    let bad = |path: &str, message: String| ConfigError::Field {
        path: format!("equivalence.{path}"),
        message,
    };
    if e.steps == 0 {
        return Err(bad("steps", "must be at least 1".into()).into());
    }
    if !(e.tolerance > 0.0) {
        return Err(bad("tolerance", "must be positive".into()).into());
    }
    let dion = DionConfig {
        learning_rate: e.learning_rate,
        momentum_decay: e.momentum_decay,
        rank: e.rank,
        weight_decay: e.weight_decay,
        ..DionConfig::default()
    };
    dion.validate().map_err(|err| bad("rank", err.to_string()))?;
    if e.rank > e.m.min(e.n) {
        return Err(bad("rank", format!("rank {} exceeds min({}, {})", e.rank, e.m, e.n)).into());
    }

    let mut orientations = vec![Orientation::Standard];
    if e.transposed {
        orientations.push(Orientation::Transposed);
    }
    let mut runs = Vec::new();
    for (i, &[dp, fs, tp]) in e.meshes.iter().enumerate() {
        let mesh = DeviceMesh::new(dp, fs, tp).map_err(|err| bad(&format!("meshes[{i}]"), err.to_string()))?;
        for &o in &orientations {
            let run = run_one(cfg, &dion, mesh, o).map_err(|err| match err {
                HarnessError::Dist(_) | HarnessError::Mesh(_) => {
                    HarnessError::Config(bad(&format!("meshes[{i}]"), format!("{mesh} {o:?}: {err}")))
                }
                other => other,
            })?;
            runs.push(run);
        }
    }
    Ok(EquivalenceReport {
        m: e.m,
        n: e.n,
        rank: e.rank,
        steps: e.steps,
        seed: cfg.seed,
        tolerance: e.tolerance,
        pass: runs.iter().all(|r| r.pass),
        runs,
    })
}

/// Writes the JSON report and a long-form CSV of per-step divergences.
pub fn write_report(report: &EquivalenceReport, out: &Path) -> Result<(), HarnessError> {
    create_dir(out)?;
    write_json(&out.join(REPORT_FILE), report)?;
    let path = out.join(SERIES_FILE);
    let mut w = csv::Writer::from_writer(File::create(&path).map_err(HarnessError::io(&path))?);
    w.write_record(["mesh", "orientation", "step", "weight_divergence", "momentum_divergence"])?;
    for run in &report.runs {
        let orientation = match run.orientation {
            Orientation::Standard => "standard",
            Orientation::Transposed => "transposed",
        };
        for (step, (wd, md)) in run.weight_divergence.iter().zip(&run.momentum_divergence).enumerate() {
            w.write_record([
                run.mesh.clone(),
                orientation.to_string(),
                step.to_string(),
                fmt_float(*wd),
                fmt_float(*md),
            ])?;
        }
    }
    w.flush().map_err(HarnessError::io(&path))?;
    Ok(())
}
