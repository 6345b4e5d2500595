//! Run configuration.
//!
//! A run is described by one TOML document. Every key has a default, so an
//! empty file is a valid config; `--set path=value` edits the parsed document
//! before it is deserialized. Unknown keys are rejected.
//!
//! ```toml
//! task = "quadratic"
//! optimizer = "dion_distributed"
//! steps = 200
//! seed = 0
//! learning_rate = 0.1
//! schedule = { kind = "cooldown", fraction = 1.0 }
//!
//! [mesh]
//! dp = 2
//! fs = 1
//! tp = 2
//!
//! [dion]
//! rank_fraction = 0.5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use dion_core::dist::DoubleDionConfig;
use dion_core::linalg::NewtonSchulzConfig;
use dion_core::mesh::{Axis, DeviceMesh};
use dion_core::optim::{
    DionConfig, LowRankMethod, MuonConfig, OptimError, ParamKind, ParamSpec, ScalarAlgorithm, ScalarOptimConfig,
    Schedule,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Syntax(String),

    #[error("bad override {0:?}: expected path=value")]
    Override(String),

    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

fn field(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Quadratic,
    MatrixFactorization,
    MlpBlobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Centralized Dion on the DP-mean gradient.
    Dion,
    DionDistributed,
    DionTransposed,
    DoubleDion,
    /// Distributed Muon.
    Muon,
    /// Distributed AdamW on every parameter.
    Adamw,
    /// Lion on every parameter.
    LionOnly,
}

impl OptimizerKind {
    pub fn is_distributed(self) -> bool {
        !matches!(self, OptimizerKind::Dion | OptimizerKind::LionOnly)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub dp: usize,
    pub fs: usize,
    pub tp: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { dp: 1, fs: 1, tp: 1 }
    }
}

impl MeshConfig {
    pub fn mesh(&self) -> Result<DeviceMesh, ConfigError> {
        DeviceMesh::new(self.dp, self.fs, self.tp).map_err(|e| field("mesh", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DionSection {
    /// Explicit rank; overrides `rank_fraction`.
    pub rank: Option<usize>,
    /// Rank as a fraction of `min(m, n)`, rounded up.
    pub rank_fraction: f64,
    pub momentum_decay: f64,
    pub oversampling_factor: f64,
    pub epsilon_col: f64,
    pub weight_decay: f64,
    pub error_feedback: bool,
    pub low_rank: LowRankMethod,
}

impl Default for DionSection {
    fn default() -> Self {
        let d = DionConfig::default();
        Self {
            rank: None,
            rank_fraction: 1.0,
            momentum_decay: d.momentum_decay,
            oversampling_factor: d.oversampling_factor,
            epsilon_col: d.epsilon_col,
            weight_decay: d.weight_decay,
            error_feedback: d.error_feedback,
            low_rank: d.low_rank,
        }
    }
}

impl DionSection {
    pub fn resolve_rank(&self, m: usize, n: usize) -> usize {
        self.rank
            .unwrap_or_else(|| (self.rank_fraction * m.min(n) as f64 - 1e-9).ceil().max(1.0) as usize)
    }

    pub fn config(&self, m: usize, n: usize, learning_rate: f64) -> DionConfig {
        DionConfig {
            learning_rate,
            momentum_decay: self.momentum_decay,
            rank: self.resolve_rank(m, n),
            oversampling_factor: self.oversampling_factor,
            epsilon_col: self.epsilon_col,
            weight_decay: self.weight_decay,
            error_feedback: self.error_feedback,
            low_rank: self.low_rank,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleDionSection {
    /// Defaults to half of `r2`, rounded down to a multiple of TP.
    pub r1: Option<usize>,
    /// Defaults to the rank resolved from `[dion]`.
    pub r2: Option<usize>,
    pub mu1: f64,
    pub mu2: f64,
    pub delayed: bool,
    pub weight_decay: f64,
}

impl Default for DoubleDionSection {
    fn default() -> Self {
        let d = DoubleDionConfig::default();
        Self {
            r1: None,
            r2: None,
            mu1: d.mu1,
            mu2: d.mu2,
            delayed: d.delayed,
            weight_decay: d.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuonSection {
    pub momentum_decay: f64,
    pub weight_decay: f64,
    pub iterations: usize,
    pub coefficients: [f64; 3],
}

impl Default for MuonSection {
    fn default() -> Self {
        let d = MuonConfig::default();
        let (a, b, c) = d.newton_schulz.coefficients;
        Self {
            momentum_decay: d.momentum_decay,
            weight_decay: d.weight_decay,
            iterations: d.newton_schulz.iterations,
            coefficients: [a, b, c],
        }
    }
}

impl MuonSection {
    pub fn config(&self, learning_rate: f64) -> MuonConfig {
        let [a, b, c] = self.coefficients;
        MuonConfig {
            learning_rate,
            momentum_decay: self.momentum_decay,
            newton_schulz: NewtonSchulzConfig {
                iterations: self.iterations,
                coefficients: (a, b, c),
            },
            weight_decay: self.weight_decay,
        }
    }
}

/// Element-wise optimizer for biases and the output layer, and for every
/// parameter under `adamw` and `lion_only`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalarSection {
    pub algorithm: ScalarAlgorithm,
    /// Defaults to the run's `learning_rate`, so both optimizers share one rate.
    pub base_learning_rate: Option<f64>,
    /// `None` picks the algorithm's default.
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub weight_decay: f64,
    pub adam_epsilon: f64,
    pub literal_learning_rate: Option<f64>,
}

impl Default for ScalarSection {
    fn default() -> Self {
        Self {
            algorithm: ScalarAlgorithm::Lion,
            base_learning_rate: None,
            beta1: None,
            beta2: None,
            weight_decay: 0.0,
            adam_epsilon: 1e-8,
            literal_learning_rate: None,
        }
    }
}

impl ScalarSection {
    /// Config for `algorithm` at the run's (already scheduled) base rate.
    /// `multiplier` also scales any explicit rate.
    pub fn config(&self, algorithm: ScalarAlgorithm, run_learning_rate: f64, multiplier: f64) -> ScalarOptimConfig {
        let base = self.base_learning_rate.map_or(run_learning_rate, |lr| lr * multiplier);
        let defaults = match algorithm {
            ScalarAlgorithm::AdamW => ScalarOptimConfig::adamw(base),
            ScalarAlgorithm::Lion => ScalarOptimConfig::lion(base),
        };
        ScalarOptimConfig {
            beta1: self.beta1.unwrap_or(defaults.beta1),
            beta2: self.beta2.unwrap_or(defaults.beta2),
            weight_decay: self.weight_decay,
            adam_epsilon: self.adam_epsilon,
            literal_learning_rate: self.literal_learning_rate.map(|lr| lr * multiplier),
            ..defaults
        }
    }
}

/// `min ‖XA − B‖²/p` over `X ∈ ℝ^{m×n}`, with `B = X*·A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticParams {
    pub m: usize,
    pub n: usize,
    pub p: usize,
}

impl Default for QuadraticParams {
    fn default() -> Self {
        Self { m: 32, n: 32, p: 64 }
    }
}

/// Recover a planted rank-`k` matrix from its entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorizationParams {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl Default for FactorizationParams {
    fn default() -> Self {
        Self { m: 32, n: 24, k: 4 }
    }
}

/// Two-layer ReLU network on Gaussian clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub dim: usize,
    pub classes: usize,
    pub samples: usize,
    pub hidden: usize,
    /// Standard deviation of the cluster centers; the noise around each is 1.
    pub separation: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            dim: 16,
            classes: 4,
            samples: 256,
            hidden: 32,
            separation: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquivalenceSection {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub steps: usize,
    /// `[dp, fs, tp]` triples.
    pub meshes: Vec<[usize; 3]>,
    /// Also run the transposed layout on every mesh.
    pub transposed: bool,
    pub tolerance: f64,
    pub learning_rate: f64,
    pub momentum_decay: f64,
    pub weight_decay: f64,
}

impl Default for EquivalenceSection {
    fn default() -> Self {
        let mut meshes = Vec::new();
        for dp in [1, 2] {
            for fs in [1, 2] {
                for tp in [1, 2] {
                    meshes.push([dp, fs, tp]);
                }
            }
        }
        Self {
            m: 16,
            n: 12,
            rank: 4,
            steps: 20,
            meshes,
            transposed: true,
            tolerance: 1e-9,
            learning_rate: 0.02,
            momentum_decay: 0.95,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    /// Largest relative gap between the SVD and power-iteration arms.
    pub svd_tolerance: f64,
    /// Allowed relative loss increase from one rank to the next larger one.
    pub rank_noise: f64,
    pub rank_fractions: Vec<f64>,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self {
            svd_tolerance: 0.05,
            rank_noise: 0.02,
            rank_fractions: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub checkpoint: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            checkpoint: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    pub optimizer: OptimizerKind,
    pub mesh: MeshConfig,
    pub steps: usize,
    pub seed: u64,
    /// Shared base learning rate.
    pub learning_rate: f64,
    pub schedule: Schedule,
    /// Standard deviation of seeded Gaussian noise added to every replica's
    /// gradient, standing in for minibatch sampling.
    pub gradient_noise: f64,
    pub dion: DionSection,
    pub double_dion: DoubleDionSection,
    pub muon: MuonSection,
    pub scalar: ScalarSection,
    pub quadratic: QuadraticParams,
    pub matrix_factorization: FactorizationParams,
    pub mlp_blobs: MlpParams,
    pub equivalence: EquivalenceSection,
    pub ablation: AblationSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Quadratic,
            optimizer: OptimizerKind::Dion,
            mesh: MeshConfig::default(),
            steps: 200,
            seed: 0,
            learning_rate: 0.1,
            schedule: Schedule::Cooldown { fraction: 1.0 },
            gradient_noise: 0.0,
            dion: DionSection::default(),
            double_dion: DoubleDionSection::default(),
            muon: MuonSection::default(),
            scalar: ScalarSection::default(),
            quadratic: QuadraticParams::default(),
            matrix_factorization: FactorizationParams::default(),
            mlp_blobs: MlpParams::default(),
            equivalence: EquivalenceSection::default(),
            ablation: AblationSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Parses `text`, applies `overrides` in order and deserializes the result.
pub fn parse(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Field {
            path: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text, overrides)
}

/// Sets `a.b.c = value`, creating intermediate tables. The value is read as
/// TOML when it parses and as a bare string otherwise.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.into()))?;
    let keys: Vec<&str> = path.trim().split('.').map(str::trim).collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::Override(spec.into()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cur = table;
    for (i, key) in parents.iter().enumerate() {
        let entry = cur
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| field(keys[..=i].join("."), "is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn optim_field(section: &str, err: OptimError) -> ConfigError {
    match err {
        OptimError::InvalidConfig { field: "learning_rate", reason } => field("learning_rate", reason),
        OptimError::InvalidConfig {
            field: "base_learning_rate",
            reason,
        } => field("scalar.base_learning_rate", reason),
        OptimError::InvalidConfig { field: f, reason } => field(format!("{section}.{f}"), reason),
        other => field(section, other.to_string()),
    }
}

impl RunConfig {
    /// Shape and role of the one parameter the matrix optimizer owns.
    pub fn matrix_param(&self) -> ParamSpec {
        let (m, n) = match self.task {
            TaskKind::Quadratic => (self.quadratic.m, self.quadratic.n),
            TaskKind::MatrixFactorization => (self.matrix_factorization.m, self.matrix_factorization.n),
            TaskKind::MlpBlobs => (self.mlp_blobs.hidden, self.mlp_blobs.dim),
        };
        ParamSpec::new(ParamKind::Weight, m, n)
    }

    pub fn rank(&self) -> usize {
        let p = self.matrix_param();
        self.dion.resolve_rank(p.d_out, p.d_in)
    }

    pub fn double_dion_config(&self, learning_rate: f64) -> DoubleDionConfig {
        let tp = self.mesh.tp.max(1);
        let r2 = self.double_dion.r2.unwrap_or_else(|| self.rank());
        let r1 = self.double_dion.r1.unwrap_or_else(|| (r2 / 2 / tp * tp).max(tp));
        DoubleDionConfig {
            learning_rate,
            mu1: self.double_dion.mu1,
            mu2: self.double_dion.mu2,
            r1,
            r2,
            delayed: self.double_dion.delayed,
            oversampling_factor: self.dion.oversampling_factor,
            epsilon_col: self.dion.epsilon_col,
            weight_decay: self.double_dion.weight_decay,
        }
    }

    /// Output directory: the explicit flag or environment value if given,
    /// then `output.dir`, then `out`.
    pub fn output_dir(&self, explicit: Option<&Path>) -> PathBuf {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| self.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.steps == 0 {
            return Err(field("steps", "must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(field("learning_rate", format!("must be finite and nonnegative, got {}", self.learning_rate)));
        }
        self.schedule.validate().map_err(|e| field("schedule", e))?;
        if !(self.gradient_noise >= 0.0 && self.gradient_noise.is_finite()) {
            return Err(field("gradient_noise", format!("must be finite and nonnegative, got {}", self.gradient_noise)));
        }
        let mesh = self.mesh.mesh()?;
        let dp = mesh.size(Axis::Dp);
        if !self.optimizer.is_distributed() && (mesh.size(Axis::Fs) > 1 || mesh.size(Axis::Tp) > 1) {
            return Err(field("mesh", format!("{:?} runs unsharded; only dp may exceed 1", self.optimizer)));
        }
        self.validate_task(dp)?;

        let p = self.matrix_param();
        let (m, n) = (p.d_out, p.d_in);
        for (axis, dim, len) in self.sharded_dims(m, n) {
            let size = mesh.size(axis);
            if len % size != 0 {
                return Err(field("mesh", format!("{axis} size {size} does not divide the weight's {dim} dimension {len}")));
            }
        }

        let lr = self.learning_rate;
        for algorithm in [ScalarAlgorithm::AdamW, ScalarAlgorithm::Lion] {
            self.scalar
                .config(algorithm, lr, 1.0)
                .validate()
                .map_err(|e| optim_field("scalar", e))?;
        }
        match self.optimizer {
            OptimizerKind::Dion | OptimizerKind::DionDistributed | OptimizerKind::DionTransposed => {
                if self.dion.rank.is_none() && !(self.dion.rank_fraction > 0.0 && self.dion.rank_fraction <= 1.0) {
                    return Err(field("dion.rank_fraction", format!("must be in (0, 1], got {}", self.dion.rank_fraction)));
                }
                let cfg = self.dion.config(m, n, lr);
                cfg.validate().map_err(|e| optim_field("dion", e))?;
                if cfg.rank > m.min(n) {
                    return Err(field("dion.rank", format!("rank {} exceeds min({m}, {n})", cfg.rank)));
                }
                if self.optimizer != OptimizerKind::Dion && !cfg.rank.is_multiple_of(mesh.size(Axis::Tp)) {
                    return Err(field("dion.rank", format!("rank {} is not divisible by tp = {}", cfg.rank, self.mesh.tp)));
                }
            }
            OptimizerKind::DoubleDion => {
                let cfg = self.double_dion_config(lr);
                cfg.validate_for(m, n).map_err(|e| optim_field("double_dion", e))?;
                for (name, r) in [("double_dion.r1", cfg.r1), ("double_dion.r2", cfg.r2)] {
                    if r % mesh.size(Axis::Tp) != 0 {
                        return Err(field(name, format!("rank {r} is not divisible by tp = {}", self.mesh.tp)));
                    }
                }
            }
            OptimizerKind::Muon => {
                if self.muon.iterations == 0 {
                    return Err(field("muon.iterations", "must be at least 1"));
                }
                if !(self.muon.momentum_decay > 0.0 && self.muon.momentum_decay < 1.0) {
                    return Err(field("muon.momentum_decay", "must be in (0, 1)"));
                }
                if !(self.muon.weight_decay >= 0.0) {
                    return Err(field("muon.weight_decay", "must be nonnegative"));
                }
            }
            OptimizerKind::Adamw | OptimizerKind::LionOnly => {}
        }
        Ok(())
    }

    /// `(axis, name, length)` for each weight dimension split by the optimizer.
    fn sharded_dims(&self, m: usize, n: usize) -> Vec<(Axis, &'static str, usize)> {
        match self.optimizer {
            OptimizerKind::Dion | OptimizerKind::LionOnly => vec![],
            OptimizerKind::DionTransposed => vec![(Axis::Fs, "row", m), (Axis::Tp, "column", n)],
            _ => vec![(Axis::Tp, "row", m), (Axis::Fs, "column", n)],
        }
    }

    fn validate_task(&self, dp: usize) -> Result<(), ConfigError> {
        let positive = |path: &str, v: usize| {
            if v == 0 {
                Err(field(path, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        match self.task {
            TaskKind::Quadratic => {
                let q = &self.quadratic;
                positive("quadratic.m", q.m)?;
                positive("quadratic.n", q.n)?;
                positive("quadratic.p", q.p)?;
                if q.p < dp {
                    return Err(field("quadratic.p", format!("needs at least one column per replica (dp = {dp})")));
                }
            }
            TaskKind::MatrixFactorization => {
                let f = &self.matrix_factorization;
                positive("matrix_factorization.m", f.m)?;
                positive("matrix_factorization.n", f.n)?;
                positive("matrix_factorization.k", f.k)?;
                if f.k > f.m.min(f.n) {
                    return Err(field("matrix_factorization.k", format!("exceeds min({}, {})", f.m, f.n)));
                }
            }
            TaskKind::MlpBlobs => {
                let p = &self.mlp_blobs;
                positive("mlp_blobs.dim", p.dim)?;
                positive("mlp_blobs.hidden", p.hidden)?;
                positive("mlp_blobs.samples", p.samples)?;
                if p.classes < 2 {
                    return Err(field("mlp_blobs.classes", "must be at least 2"));
                }
                if p.samples < dp {
                    return Err(field("mlp_blobs.samples", format!("needs at least one sample per replica (dp = {dp})")));
                }
                if !(p.separation >= 0.0 && p.separation.is_finite()) {
                    return Err(field("mlp_blobs.separation", "must be finite and nonnegative"));
                }
            }
        }
        Ok(())
    }
}
