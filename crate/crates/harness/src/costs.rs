//! Cost-model predictions against one measured step per shape.

use std::fs;
use std::path::Path;

use dion_core::accounting::{
    predict_comm, predict_comm_transposed, predict_dion_flops, predict_dion_matmul_flops, predict_muon_flops,
    CostModelInput, CostPrediction,
};
use dion_core::dist::{
    adamw_step_distributed, dion_step_distributed, muon_step_distributed, weight_spec, DistAdamWState,
    DistDionState, DistMuonState,
};
use dion_core::linalg::DenseMatrix;
use dion_core::mesh::{Axis, CostLedger, DeviceMesh, FlopPhase, LedgerSnapshot, ShardedMatrix};
use dion_core::optim::{DionConfig, MuonConfig, Orientation, ParamKind, ParamSpec, ScalarOptimConfig};
use dion_core::rng::{normal_matrix, Purpose};
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::{create_dir, write_json, HarnessError};

pub const REPORT_FILE: &str = "costs.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shape {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    /// `DPxFSxTP`, e.g. `2x2x1`.
    pub mesh: String,
    #[serde(default)]
    pub transposed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapesFile {
    #[serde(default)]
    shapes: Vec<Shape>,
}

/// Twelve shapes covering every axis combination and both aspect ratios.
pub fn default_shapes() -> Vec<Shape> {
    [
        (8, 4, 2, "2x2x2"),
        (16, 12, 4, "2x2x2"),
        (16, 12, 4, "1x1x1"),
        (16, 12, 4, "2x1x1"),
        (16, 12, 4, "1x2x1"),
        (16, 12, 4, "1x1x2"),
        (32, 16, 8, "2x2x2"),
        (32, 16, 8, "4x2x1"),
        (12, 24, 4, "1x2x2"),
        (24, 24, 12, "2x1x4"),
        (40, 20, 6, "1x4x2"),
        (64, 32, 16, "2x2x4"),
    ]
    .into_iter()
    .map(|(m, n, r, mesh)| Shape {
        m,
        n,
        r,
        mesh: mesh.into(),
        transposed: false,
    })
    .collect()
}

pub fn load_shapes(path: &Path) -> Result<Vec<Shape>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let de = toml::Deserializer::parse(&text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let file: ShapesFile = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Field {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })?;
    Ok(file.shapes)
}

/// One integer the model predicts and the ledger measures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExactCheck {
    pub name: &'static str,
    pub predicted: u64,
    pub measured: u64,
    pub delta: i64,
    pub pass: bool,
}

fn exact(name: &'static str, predicted: u64, measured: u64) -> ExactCheck {
    ExactCheck {
        name,
        predicted,
        measured,
        delta: measured as i64 - predicted as i64,
        pass: predicted == measured,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ShapeReport {
    pub shape: Shape,
    pub prediction: CostPrediction,
    pub dion: LedgerSnapshot,
    pub muon: LedgerSnapshot,
    pub adam: LedgerSnapshot,
    /// Per-device FLOPs of the four rank-`r` products, max over devices.
    pub dion_matmul_flops: u64,
    /// `(measured − predicted) / predicted` for the whole Dion step.
    pub dion_total_flops_relative_error: f64,
    pub checks: Vec<ExactCheck>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub shapes: Vec<ShapeReport>,
    /// `shape/check` for every failed exact check.
    pub mismatches: Vec<String>,
    pub pass: bool,
}

fn shape_error(i: usize, message: String) -> HarnessError {
    HarnessError::Config(ConfigError::Field {
        path: format!("shapes[{i}]"),
        message,
    })
}

fn measure(i: usize, shape: &Shape, seed: u64) -> Result<ShapeReport, HarnessError> {
    let mesh: DeviceMesh = shape
        .mesh
        .parse()
        .map_err(|e: dion_core::mesh::MeshError| shape_error(i, e.to_string()))?;
    let (m, n, r) = (shape.m, shape.n, shape.r);
    let (dp, fs, tp) = (mesh.size(Axis::Dp), mesh.size(Axis::Fs), mesh.size(Axis::Tp));
    let input = CostModelInput::new(m, n, r, dp, fs, tp);
    input.validate().map_err(|e| shape_error(i, e))?;
    let orientation = if shape.transposed {
        Orientation::Transposed
    } else {
        Orientation::Standard
    };
    let (prediction, model_input) = if shape.transposed {
        (predict_comm_transposed(&input), input.transposed())
    } else {
        (predict_comm(&input), input)
    };

    let x = normal_matrix(seed, Purpose::Weights, i as u64, m, n);
    let per_replica: Vec<DenseMatrix> =
        (0..dp).map(|d| normal_matrix(seed, Purpose::Gradient, (i * dp + d) as u64, m, n)).collect();
    let layout = |o| -> Result<_, HarnessError> {
        ShardedMatrix::shard_per_replica(&per_replica, weight_spec(m, n, o), mesh)
            .map_err(|e| shape_error(i, e.to_string()))
    };

    let state = DistDionState::new(&x, r, seed, orientation, mesh).map_err(|e| shape_error(i, e.to_string()))?;
    let cfg = DionConfig {
        rank: r,
        ..DionConfig::default()
    };
    let mut ledger = CostLedger::new();
    dion_step_distributed(&state, &layout(orientation)?, &cfg, &mut ledger)?;
    let dion = ledger.snapshot();
    let matmul_phases = [FlopPhase::PowerIteration, FlopPhase::ErrorFeedback, FlopPhase::WeightUpdate];
    let dion_matmul_flops = (0..mesh.num_devices())
        .map(|d| matmul_phases.iter().map(|&p| ledger.device_phase_flops(d, p)).sum::<u64>())
        .max()
        .unwrap_or(0);
    let model_flops = predict_dion_flops(&model_input);

    let std = weight_spec(m, n, Orientation::Standard);
    let xs = ShardedMatrix::shard(&x, std, mesh)?;
    let zeros = ShardedMatrix::shard(&DenseMatrix::zeros(m, n), std, mesh)?;
    let grads = layout(Orientation::Standard)?;
    let mut ledger = CostLedger::new();
    let muon_state = DistMuonState {
        x: xs.clone(),
        m_buf: zeros.clone(),
    };
    muon_step_distributed(&muon_state, &grads, &MuonConfig::default(), &mut ledger)?;
    let muon = ledger.snapshot();

    let mut ledger = CostLedger::new();
    let adam_state = DistAdamWState {
        x: xs,
        m1: zeros.clone(),
        m2: zeros,
        t: 0,
    };
    let param = ParamSpec::new(ParamKind::Weight, m, n);
    adamw_step_distributed(&adam_state, &grads, &ScalarOptimConfig::adamw(1e-3), &param, &mut ledger)?;
    let adam = ledger.snapshot();

    let p = &prediction;
    let checks = vec![
        exact("dion_dp_elements", p.dion_dp_elements, dion.dp_elements),
        exact("dion_fs_elements", p.dion_fs_elements, dion.fs_elements),
        exact("dion_tp_elements", p.dion_tp_elements, dion.tp_elements),
        exact("dion_matmul_flops", predict_dion_matmul_flops(&model_input), dion_matmul_flops),
        exact("muon_dp_elements", p.muon_dp_elements, muon.dp_elements),
        exact("muon_fs_elements", p.muon_fs_elements, muon.fs_elements),
        exact("muon_tp_elements", p.muon_tp_elements, muon.tp_elements),
        exact("muon_flops", predict_muon_flops(&input) as u64, muon.flops),
        exact("adam_dp_elements", p.adam_dp_elements, adam.dp_elements),
        exact("adam_fs_elements", p.adam_fs_elements, adam.fs_elements),
        exact("adam_tp_elements", p.adam_tp_elements, adam.tp_elements),
    ];
    Ok(ShapeReport {
        shape: shape.clone(),
        prediction,
        dion,
        muon,
        adam,
        dion_matmul_flops,
        dion_total_flops_relative_error: (dion.flops as f64 - model_flops) / model_flops,
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

/// Predicts and measures every shape. An invalid shape is an error; a
/// prediction that disagrees with its measurement is a failed check.
pub fn report_costs(shapes: &[Shape], seed: u64) -> Result<CostReport, HarnessError> {
    let shapes = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| measure(i, s, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mismatches: Vec<String> = shapes
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            s.checks
                .iter()
                .filter(|c| !c.pass)
                .map(move |c| format!("shapes[{i}] {}x{} r={} {}: {}", s.shape.m, s.shape.n, s.shape.r, s.shape.mesh, c.name))
        })
        .collect();
    Ok(CostReport {
        pass: mismatches.is_empty(),
        mismatches,
        shapes,
    })
}

pub fn write_report(report: &CostReport, out: &Path) -> Result<(), HarnessError> {
    create_dir(out)?;
    write_json(&out.join(REPORT_FILE), report)
}
