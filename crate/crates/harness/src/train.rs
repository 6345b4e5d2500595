//! Deterministic training loop over a toy task.

use std::fs;
use std::path::{Path, PathBuf};

use dion_core::checkpoint::Checkpoint;
use dion_core::dist::{
    adamw_step_distributed, dion_step_distributed, dion_step_transposed, double_dion_step, muon_step_distributed,
    weight_spec, DistAdamWState, DistDionState, DistMuonState, DoubleDionState,
};
use dion_core::linalg::{truncated_svd, DenseMatrix};
use dion_core::rng::{normal_matrix, Purpose};
use dion_core::mesh::{Axis, CostLedger, DeviceMesh, LedgerSnapshot, ShardedMatrix};
use dion_core::optim::{
    adamw_step, dion_step_centralized, lion_step, AdamWState, DionState, LionState, Orientation, ParamSpec,
    ScalarAlgorithm,
};
use serde::Serialize;

use crate::config::{OptimizerKind, RunConfig, TaskKind};
use crate::metrics::{write_csv, MetricsRow};
use crate::tasks::{self, mean_gradient, Task};
use crate::{create_dir, write_json, HarnessError};

enum ParamOpt {
    Central(DionState),
    Dist(DistDionState),
    Double(DoubleDionState),
    Muon(DistMuonState),
    AdamWDist(DistAdamWState),
    Lion(LionState),
    AdamW(AdamWState),
}

pub struct Trainer {
    cfg: RunConfig,
    task: Box<dyn Task>,
    mesh: DeviceMesh,
    params: Vec<DenseMatrix>,
    opts: Vec<ParamOpt>,
    step: usize,
}

fn zeros_like(x: &ShardedMatrix) -> ShardedMatrix {
    let spec = *x.spec();
    ShardedMatrix::shard(&DenseMatrix::zeros(spec.rows, spec.cols), spec, *x.mesh()).expect("layout already validated")
}

fn elementwise(algorithm: ScalarAlgorithm, x: DenseMatrix) -> ParamOpt {
    match algorithm {
        ScalarAlgorithm::Lion => ParamOpt::Lion(LionState::new(x)),
        ScalarAlgorithm::AdamW => ParamOpt::AdamW(AdamWState::new(x)),
    }
}

fn spectral_norm(d: &DenseMatrix) -> Result<f64, HarnessError> {
    if d.is_zero() {
        return Ok(0.0);
    }
    Ok(truncated_svd(d, 1)?.s[0])
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let mesh = cfg.mesh.mesh()?;
        let task = tasks::build(cfg);
        let params = task.init();
        let mut opts = Vec::with_capacity(params.len());
        for (info, x) in task.params().iter().zip(&params) {
            let (m, n) = x.shape();
            let std = weight_spec(m, n, Orientation::Standard);
            let opt = match (cfg.optimizer, info.matrix) {
                (OptimizerKind::LionOnly, _) => elementwise(ScalarAlgorithm::Lion, x.clone()),
                (OptimizerKind::Adamw, false) => elementwise(ScalarAlgorithm::AdamW, x.clone()),
                (_, false) => elementwise(cfg.scalar.algorithm, x.clone()),
                (OptimizerKind::Dion, true) => {
                    ParamOpt::Central(DionState::new(x.clone(), cfg.rank(), cfg.seed, Orientation::Standard))
                }
                (OptimizerKind::DionDistributed, true) => {
                    ParamOpt::Dist(DistDionState::new(x, cfg.rank(), cfg.seed, Orientation::Standard, mesh)?)
                }
                (OptimizerKind::DionTransposed, true) => {
                    ParamOpt::Dist(DistDionState::new(x, cfg.rank(), cfg.seed, Orientation::Transposed, mesh)?)
                }
                (OptimizerKind::DoubleDion, true) => {
                    let dd = cfg.double_dion_config(cfg.learning_rate);
                    ParamOpt::Double(DoubleDionState::new(x, &dd, cfg.seed, mesh)?)
                }
                (OptimizerKind::Muon, true) => {
                    let xs = ShardedMatrix::shard(x, std, mesh)?;
                    ParamOpt::Muon(DistMuonState {
                        m_buf: zeros_like(&xs),
                        x: xs,
                    })
                }
                (OptimizerKind::Adamw, true) => {
                    let xs = ShardedMatrix::shard(x, std, mesh)?;
                    ParamOpt::AdamWDist(DistAdamWState {
                        m1: zeros_like(&xs),
                        m2: zeros_like(&xs),
                        x: xs,
                        t: 0,
                    })
                }
            };
            opts.push(opt);
        }
        Ok(Self {
            cfg: cfg.clone(),
            task,
            mesh,
            params,
            opts,
            step: 0,
        })
    }

    pub fn params(&self) -> &[DenseMatrix] {
        &self.params
    }

    pub fn loss(&self) -> f64 {
        self.task.loss(&self.params)
    }

    /// Runs one step and returns its metrics.
    pub fn step(&mut self) -> Result<MetricsRow, HarnessError> {
        let t = self.step;
        let loss = self.loss();
        if !loss.is_finite() {
            return Err(HarnessError::Diverged { step: t });
        }
        let dp = self.mesh.size(Axis::Dp);
        let replicas: Vec<Vec<DenseMatrix>> = (0..dp)
            .map(|d| {
                let mut g = self.task.replica_gradient(&self.params, d, dp);
                if self.cfg.gradient_noise > 0.0 {
                    let count = g.len();
                    for (k, gk) in g.iter_mut().enumerate() {
                        let index = ((t * dp + d) * count + k) as u64;
                        let noise = normal_matrix(self.cfg.seed, Purpose::Gradient, index, gk.rows(), gk.cols());
                        gk.add_scaled(self.cfg.gradient_noise, &noise).expect("same shape");
                    }
                }
                g
            })
            .collect();
        let mean = mean_gradient(&replicas);
        let grad_norm = mean.iter().map(|g| g.frobenius_norm().powi(2)).sum::<f64>().sqrt();

        let multiplier = self.cfg.schedule.multiplier(t, self.cfg.steps);
        let lr = self.cfg.learning_rate * multiplier;
        let scalar = |a| self.cfg.scalar.config(a, lr, multiplier);
        let mut ledger = CostLedger::new();
        let mut update_norm = 0.0f64;

        for (k, info) in self.task.params().iter().enumerate() {
            let spec: &ParamSpec = &info.spec;
            let per_replica: Vec<DenseMatrix> = replicas.iter().map(|r| r[k].clone()).collect();
            let (m, n) = self.params[k].shape();
            let shard = |orientation| ShardedMatrix::shard_per_replica(&per_replica, weight_spec(m, n, orientation), self.mesh);
            let std = Orientation::Standard;
            let next = match &mut self.opts[k] {
                ParamOpt::Central(s) => {
                    *s = dion_step_centralized(s, &mean[k], &self.cfg.dion.config(m, n, lr), &mut ledger)?;
                    s.x.clone()
                }
                ParamOpt::Dist(s) => {
                    let cfg = self.cfg.dion.config(m, n, lr);
                    *s = match s.orientation {
                        Orientation::Standard => dion_step_distributed(s, &shard(std)?, &cfg, &mut ledger)?,
                        Orientation::Transposed => {
                            dion_step_transposed(s, &shard(Orientation::Transposed)?, &cfg, &mut ledger)?
                        }
                    };
                    s.x.assemble()
                }
                ParamOpt::Double(s) => {
                    *s = double_dion_step(s, &shard(std)?, &self.cfg.double_dion_config(lr), &mut ledger)?;
                    s.x.assemble()
                }
                ParamOpt::Muon(s) => {
                    *s = muon_step_distributed(s, &shard(std)?, &self.cfg.muon.config(lr), &mut ledger)?;
                    s.x.assemble()
                }
                ParamOpt::AdamWDist(s) => {
                    let cfg = scalar(ScalarAlgorithm::AdamW);
                    *s = adamw_step_distributed(s, &shard(std)?, &cfg, spec, &mut ledger)?;
                    s.x.assemble()
                }
                ParamOpt::Lion(s) => {
                    *s = lion_step(s, &mean[k], &scalar(ScalarAlgorithm::Lion), spec)?;
                    s.x.clone()
                }
                ParamOpt::AdamW(s) => {
                    *s = adamw_step(s, &mean[k], &scalar(ScalarAlgorithm::AdamW), spec)?;
                    s.x.clone()
                }
            };
            if info.matrix {
                update_norm = update_norm.max(spectral_norm(&next.sub(&self.params[k])?)?);
            }
            self.params[k] = next;
        }
        self.step += 1;
        Ok(MetricsRow {
            step: t,
            loss,
            grad_norm,
            update_spectral_norm: update_norm,
            ledger: ledger.snapshot(),
        })
    }

    /// Parameters and optimizer state. Per-replica momenta are stored as
    /// `<param>.<buffer>.dp<d>`.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            seed: self.cfg.seed,
            step: self.step as u64,
            ..Default::default()
        };
        let dp = self.mesh.size(Axis::Dp);
        for (info, (x, opt)) in self.task.params().iter().zip(self.params.iter().zip(&self.opts)) {
            let name = info.name;
            let mut put = |suffix: &str, t: DenseMatrix| {
                ck.tensors.insert(format!("{name}{suffix}"), t);
            };
            put("", x.clone());
            let mut per_replica = |suffix: &str, s: &ShardedMatrix| {
                for d in 0..dp {
                    put(&format!("{suffix}.dp{d}"), s.assemble_replica(d));
                }
            };
            match opt {
                ParamOpt::Central(s) => {
                    put(".momentum", s.m_buf.clone());
                    put(".basis", s.q.clone());
                }
                ParamOpt::Dist(s) => {
                    per_replica(".momentum", &s.m_local);
                    put(".basis", s.q.assemble());
                }
                ParamOpt::Double(s) => {
                    per_replica(".momentum1", &s.m1_local);
                    put(".basis1", s.q1.assemble());
                    put(".momentum2", s.m2.assemble());
                    put(".basis2", s.q2.assemble());
                }
                ParamOpt::Muon(s) => put(".momentum", s.m_buf.assemble()),
                ParamOpt::AdamWDist(s) => {
                    put(".m1", s.m1.assemble());
                    put(".m2", s.m2.assemble());
                }
                ParamOpt::Lion(s) => put(".momentum", s.m_buf.clone()),
                ParamOpt::AdamW(s) => {
                    put(".m1", s.m1.clone());
                    put(".m2", s.m2.clone());
                }
            }
        }
        ck
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<MetricsRow>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub optimum: Option<f64>,
    pub totals: LedgerSnapshot,
    pub checkpoint: Checkpoint,
}

pub fn train(cfg: &RunConfig) -> Result<RunOutcome, HarnessError> {
    let mut trainer = Trainer::new(cfg)?;
    let initial_loss = trainer.loss();
    let mut rows = Vec::with_capacity(cfg.steps);
    let mut totals = LedgerSnapshot::default();
    for _ in 0..cfg.steps {
        let row = trainer.step()?;
        totals.dp_elements += row.ledger.dp_elements;
        totals.fs_elements += row.ledger.fs_elements;
        totals.tp_elements += row.ledger.tp_elements;
        totals.flops += row.ledger.flops;
        rows.push(row);
    }
    let final_loss = trainer.loss();
    if !final_loss.is_finite() {
        return Err(HarnessError::Diverged { step: cfg.steps });
    }
    Ok(RunOutcome {
        rows,
        initial_loss,
        final_loss,
        optimum: trainer.task.optimum(),
        totals,
        checkpoint: trainer.checkpoint(),
    })
}

#[derive(Serialize)]
struct Summary<'a> {
    task: TaskKind,
    optimizer: OptimizerKind,
    mesh: String,
    steps: usize,
    seed: u64,
    initial_loss: f64,
    final_loss: f64,
    optimum: Option<f64>,
    totals: LedgerSnapshot,
    config: &'a RunConfig,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Trains and writes `metrics.csv`, `summary.json` and, unless disabled,
/// `checkpoint/` under `out`. Returns the metrics path.
pub fn run_task(cfg: &RunConfig, out: &Path) -> Result<PathBuf, HarnessError> {
    let outcome = train(cfg)?;
    create_dir(out)?;
    let metrics = out.join(METRICS_FILE);
    let file = fs::File::create(&metrics).map_err(HarnessError::io(&metrics))?;
    write_csv(file, &outcome.rows)?;
    let summary = Summary {
        task: cfg.task,
        optimizer: cfg.optimizer,
        mesh: format!("{}x{}x{}", cfg.mesh.dp, cfg.mesh.fs, cfg.mesh.tp),
        steps: cfg.steps,
        seed: cfg.seed,
        initial_loss: outcome.initial_loss,
        final_loss: outcome.final_loss,
        optimum: outcome.optimum,
        totals: outcome.totals,
        config: cfg,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    if cfg.output.checkpoint {
        outcome.checkpoint.save(&out.join(CHECKPOINT_DIR))?;
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse;

    fn cfg(overrides: &[&str]) -> RunConfig {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        parse("", &o).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_loss_constant() {
        for task in ["quadratic", "matrix_factorization", "mlp_blobs"] {
            let out = train(&cfg(&["learning_rate=0.0", "steps=10", &format!("task={task}")])).unwrap();
            assert!(out.rows.iter().all(|r| r.loss == out.initial_loss), "{task}");
            assert_eq!(out.final_loss, out.initial_loss);
            assert!(out.rows.iter().all(|r| r.update_spectral_norm == 0.0));
        }
    }

    #[test]
    fn every_optimizer_runs_on_every_task() {
        let optimizers = [
            ("dion", "1x1x1"),
            ("dion", "2x1x1"),
            ("dion_distributed", "2x2x2"),
            ("dion_transposed", "2x2x2"),
            ("double_dion", "2x1x2"),
            ("muon", "2x2x1"),
            ("adamw", "2x1x2"),
            ("lion_only", "2x1x1"),
        ];
        for task in ["quadratic", "matrix_factorization", "mlp_blobs"] {
            for (opt, mesh) in optimizers {
                let dims: Vec<&str> = mesh.split('x').collect();
                let c = cfg(&[
                    &format!("task={task}"),
                    &format!("optimizer={opt}"),
                    &format!("mesh.dp={}", dims[0]),
                    &format!("mesh.fs={}", dims[1]),
                    &format!("mesh.tp={}", dims[2]),
                    "dion.rank_fraction=0.5",
                    "steps=15",
                    "learning_rate=0.02",
                ]);
                let out = train(&c).unwrap_or_else(|e| panic!("{task}/{opt}/{mesh}: {e}"));
                assert_eq!(out.rows.len(), 15);
                assert!(out.rows.iter().all(|r| r.loss.is_finite()));
                assert!(out.final_loss < out.initial_loss, "{task}/{opt}/{mesh}: {} -> {}", out.initial_loss, out.final_loss);
            }
        }
    }

    #[test]
    fn ledger_rows_match_the_layout() {
        let c = cfg(&["optimizer=dion_distributed", "mesh.dp=2", "mesh.fs=2", "mesh.tp=2", "dion.rank=4", "steps=3"]);
        let out = train(&c).unwrap();
        let (m, n, r) = (32u64, 32u64, 4u64);
        for row in &out.rows {
            assert_eq!(row.ledger.dp_elements, (m + n) * r);
            assert_eq!(row.ledger.fs_elements, (m + 1) * r);
            assert_eq!(row.ledger.tp_elements, 2 * n * r + 5 * r + r * r);
        }
        assert_eq!(out.totals.dp_elements, 3 * (m + n) * r);
    }

    #[test]
    fn centralized_and_distributed_runs_agree() {
        let base = ["dion.rank=4", "steps=30", "mesh.dp=2"];
        let central = train(&cfg(&[&base[..], &["optimizer=dion"]].concat())).unwrap();
        let dist = train(&cfg(&[&base[..], &["optimizer=dion_distributed", "mesh.tp=2"]].concat())).unwrap();
        assert!((central.final_loss - dist.final_loss).abs() < 1e-9 * central.initial_loss);
    }

    #[test]
    fn checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(&["optimizer=dion_distributed", "mesh.dp=2", "dion.rank=4", "steps=2"]);
        run_task(&c, dir.path()).unwrap();
        let ck = Checkpoint::load(&dir.path().join(CHECKPOINT_DIR)).unwrap();
        assert_eq!(ck.step, 2);
        let names: Vec<&str> = ck.tensors.keys().map(String::as_str).collect();
        assert_eq!(names, ["x", "x.basis", "x.momentum.dp0", "x.momentum.dp1"]);
    }
}
