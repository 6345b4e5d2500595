//! Toy objectives with exact gradients.
//!
//! Each task splits its data over `dp` replicas so that replica `d` sees a
//! gradient `G_d` with `mean_d G_d` equal to the full-batch gradient.

use dion_core::linalg::DenseMatrix;
use dion_core::optim::{ParamKind, ParamSpec};
use dion_core::rng::{normal_matrix, Purpose};

use crate::config::{FactorizationParams, MlpParams, QuadraticParams, RunConfig, TaskKind};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: &'static str,
    pub spec: ParamSpec,
    /// Owned by the matrix optimizer rather than the element-wise one.
    pub matrix: bool,
}

pub trait Task {
    fn params(&self) -> &[ParamInfo];
    fn init(&self) -> Vec<DenseMatrix>;
    fn loss(&self, params: &[DenseMatrix]) -> f64;
    /// Gradient seen by replica `d` of `dp`, one matrix per parameter.
    fn replica_gradient(&self, params: &[DenseMatrix], d: usize, dp: usize) -> Vec<DenseMatrix>;
    /// Best achievable loss, when known.
    fn optimum(&self) -> Option<f64> {
        None
    }
}

pub fn build(cfg: &RunConfig) -> Box<dyn Task> {
    match cfg.task {
        TaskKind::Quadratic => Box::new(Quadratic::new(&cfg.quadratic, cfg.seed)),
        TaskKind::MatrixFactorization => Box::new(Factorization::new(&cfg.matrix_factorization, cfg.seed)),
        TaskKind::MlpBlobs => Box::new(MlpBlobs::new(&cfg.mlp_blobs, cfg.seed)),
    }
}

fn weight(name: &'static str, m: usize, n: usize) -> ParamInfo {
    ParamInfo {
        name,
        spec: ParamSpec::new(ParamKind::Weight, m, n),
        matrix: true,
    }
}

/// `‖XA − B‖²/p` with `A` of shape `n×p` and `B = X*·A`. Replica `d` owns the
/// columns `j ≡ d (mod dp)` of `A` and `B`.
pub struct Quadratic {
    a: DenseMatrix,
    b: DenseMatrix,
    x0: DenseMatrix,
    params: Vec<ParamInfo>,
}

impl Quadratic {
    pub fn new(p: &QuadraticParams, seed: u64) -> Self {
        let a = normal_matrix(seed, Purpose::Task, 0, p.n, p.p).scale(1.0 / (p.p as f64).sqrt());
        let target = normal_matrix(seed, Purpose::Task, 1, p.m, p.n).scale(1.0 / (p.n as f64).sqrt());
        Self {
            b: target.dot(&a),
            a,
            x0: DenseMatrix::zeros(p.m, p.n),
            params: vec![weight("x", p.m, p.n)],
        }
    }

    fn residual(&self, x: &DenseMatrix) -> DenseMatrix {
        x.dot(&self.a).sub(&self.b).expect("shapes fixed at construction")
    }
}

impl Task for Quadratic {
    fn params(&self) -> &[ParamInfo] {
        &self.params
    }

    fn init(&self) -> Vec<DenseMatrix> {
        vec![self.x0.clone()]
    }

    fn loss(&self, params: &[DenseMatrix]) -> f64 {
        let r = self.residual(&params[0]);
        r.frobenius_norm().powi(2) / self.a.cols() as f64
    }

    fn replica_gradient(&self, params: &[DenseMatrix], d: usize, dp: usize) -> Vec<DenseMatrix> {
        let mut r = self.residual(&params[0]);
        for i in 0..r.rows() {
            for j in (0..r.cols()).filter(|j| j % dp != d) {
                r.set(i, j, 0.0);
            }
        }
        let scale = 2.0 * dp as f64 / self.a.cols() as f64;
        vec![r.dot(&self.a.transpose()).scale(scale)]
    }

    fn optimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `‖X − T‖²/(mn)` for a planted rank-`k` target `T`. Replica `d` owns the
/// entries with `(i + j) ≡ d (mod dp)`.
pub struct Factorization {
    target: DenseMatrix,
    params: Vec<ParamInfo>,
}

impl Factorization {
    pub fn new(p: &FactorizationParams, seed: u64) -> Self {
        let u = normal_matrix(seed, Purpose::Task, 0, p.m, p.k);
        let v = normal_matrix(seed, Purpose::Task, 1, p.n, p.k);
        let target = u.dot(&v.transpose()).scale(1.0 / (p.k as f64).sqrt());
        Self {
            target,
            params: vec![weight("x", p.m, p.n)],
        }
    }
}

impl Task for Factorization {
    fn params(&self) -> &[ParamInfo] {
        &self.params
    }

    fn init(&self) -> Vec<DenseMatrix> {
        vec![DenseMatrix::zeros(self.target.rows(), self.target.cols())]
    }

    fn loss(&self, params: &[DenseMatrix]) -> f64 {
        let diff = params[0].sub(&self.target).expect("shapes fixed at construction");
        diff.frobenius_norm().powi(2) / self.target.len() as f64
    }

    fn replica_gradient(&self, params: &[DenseMatrix], d: usize, dp: usize) -> Vec<DenseMatrix> {
        let scale = 2.0 * dp as f64 / self.target.len() as f64;
        let diff = params[0].sub(&self.target).expect("shapes fixed at construction");
        vec![DenseMatrix::from_fn(diff.rows(), diff.cols(), |i, j| {
            if (i + j) % dp == d {
                scale * diff.get(i, j)
            } else {
                0.0
            }
        })]
    }

    fn optimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Softmax regression through one hidden ReLU layer:
/// `logits = W2·relu(W1·x + b1) + b2`, mean cross-entropy over all samples.
/// Sample `i` has class `i mod c` and belongs to replica `i mod dp`.
pub struct MlpBlobs {
    /// `dim × samples`, one sample per column.
    inputs: DenseMatrix,
    labels: Vec<usize>,
    classes: usize,
    hidden: usize,
    seed: u64,
    params: Vec<ParamInfo>,
}

const W1: usize = 0;
const B1: usize = 1;
const W2: usize = 2;
const B2: usize = 3;

impl MlpBlobs {
    pub fn new(p: &MlpParams, seed: u64) -> Self {
        let centers = normal_matrix(seed, Purpose::Task, 0, p.dim, p.classes).scale(p.separation);
        let noise = normal_matrix(seed, Purpose::Task, 1, p.dim, p.samples);
        let labels: Vec<usize> = (0..p.samples).map(|i| i % p.classes).collect();
        let inputs = DenseMatrix::from_fn(p.dim, p.samples, |i, j| centers.get(i, labels[j]) + noise.get(i, j));
        let params = vec![
            weight("w1", p.hidden, p.dim),
            ParamInfo {
                name: "b1",
                spec: ParamSpec::new(ParamKind::Bias, p.hidden, 1),
                matrix: false,
            },
            ParamInfo {
                name: "w2",
                spec: ParamSpec::new(ParamKind::Unembedding, p.classes, p.hidden),
                matrix: false,
            },
            ParamInfo {
                name: "b2",
                spec: ParamSpec::new(ParamKind::Bias, p.classes, 1),
                matrix: false,
            },
        ];
        Self {
            inputs,
            labels,
            classes: p.classes,
            hidden: p.hidden,
            seed,
            params,
        }
    }

    /// Hidden pre-activations and class probabilities for `cols` samples.
    fn forward(&self, params: &[DenseMatrix], cols: &[usize]) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
        let x = DenseMatrix::from_fn(self.inputs.rows(), cols.len(), |i, j| self.inputs.get(i, cols[j]));
        let mut z = params[W1].dot(&x);
        for i in 0..z.rows() {
            for j in 0..z.cols() {
                z[(i, j)] += params[B1].get(i, 0);
            }
        }
        let h = z.map(|v| v.max(0.0));
        let mut logits = params[W2].dot(&h);
        for j in 0..logits.cols() {
            let peak = (0..self.classes)
                .map(|c| logits.get(c, j) + params[B2].get(c, 0))
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for c in 0..self.classes {
                let e = (logits.get(c, j) + params[B2].get(c, 0) - peak).exp();
                logits.set(c, j, e);
                total += e;
            }
            for c in 0..self.classes {
                logits[(c, j)] /= total;
            }
        }
        (x, z, logits)
    }
}

impl Task for MlpBlobs {
    fn params(&self) -> &[ParamInfo] {
        &self.params
    }

    fn init(&self) -> Vec<DenseMatrix> {
        let (d, h, c) = (self.inputs.rows(), self.hidden, self.classes);
        vec![
            normal_matrix(self.seed, Purpose::Weights, 0, h, d).scale(1.0 / (d as f64).sqrt()),
            DenseMatrix::zeros(h, 1),
            normal_matrix(self.seed, Purpose::Weights, 1, c, h).scale(1.0 / (h as f64).sqrt()),
            DenseMatrix::zeros(c, 1),
        ]
    }

    fn loss(&self, params: &[DenseMatrix]) -> f64 {
        let all: Vec<usize> = (0..self.labels.len()).collect();
        let (_, _, probs) = self.forward(params, &all);
        let total: f64 = all.iter().map(|&j| -probs.get(self.labels[j], j).ln()).sum();
        // adding zero turns a -0.0 from ln(1) into +0.0
        total / all.len() as f64 + 0.0
    }

    fn replica_gradient(&self, params: &[DenseMatrix], d: usize, dp: usize) -> Vec<DenseMatrix> {
        let cols: Vec<usize> = (0..self.labels.len()).filter(|i| i % dp == d).collect();
        let scale = dp as f64 / self.labels.len() as f64;
        let (x, z, mut dlogits) = self.forward(params, &cols);
        for (j, &i) in cols.iter().enumerate() {
            dlogits[(self.labels[i], j)] -= 1.0;
        }
        let dlogits = dlogits.scale(scale);
        let h = z.map(|v| v.max(0.0));
        let dw2 = dlogits.dot(&h.transpose());
        let db2 = DenseMatrix::from_fn(self.classes, 1, |c, _| (0..cols.len()).map(|j| dlogits.get(c, j)).sum());
        let dh = params[W2].transpose().dot(&dlogits);
        let dz = dh.zip_with(&z, "mlp backward", |g, zv| if zv > 0.0 { g } else { 0.0 }).expect("same shape");
        let dw1 = dz.dot(&x.transpose());
        let db1 = DenseMatrix::from_fn(self.hidden, 1, |i, _| (0..cols.len()).map(|j| dz.get(i, j)).sum());
        vec![dw1, db1, dw2, db2]
    }
}

/// Element-wise mean of the replicas' gradients.
pub fn mean_gradient(per_replica: &[Vec<DenseMatrix>]) -> Vec<DenseMatrix> {
    let dp = per_replica.len() as f64;
    (0..per_replica[0].len())
        .map(|k| {
            let mut acc = per_replica[0][k].clone();
            for g in &per_replica[1..] {
                acc.add_scaled(1.0, &g[k]).expect("replicas share shapes");
            }
            acc.scale(1.0 / dp)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_difference(task: &dyn Task, params: &[DenseMatrix]) -> Vec<DenseMatrix> {
        let h = 1e-6;
        params
            .iter()
            .enumerate()
            .map(|(k, p)| {
                DenseMatrix::from_fn(p.rows(), p.cols(), |i, j| {
                    let mut plus = params.to_vec();
                    let mut minus = params.to_vec();
                    plus[k][(i, j)] += h;
                    minus[k][(i, j)] -= h;
                    (task.loss(&plus) - task.loss(&minus)) / (2.0 * h)
                })
            })
            .collect()
    }

    fn perturbed(task: &dyn Task) -> Vec<DenseMatrix> {
        task.init()
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let noise = normal_matrix(99, Purpose::Weights, 100 + k as u64, p.rows(), p.cols());
                p.add(&noise.scale(0.3)).unwrap()
            })
            .collect()
    }

    fn check(task: &dyn Task, tol: f64) {
        let params = perturbed(task);
        let numeric = finite_difference(task, &params);
        for dp in [1, 2, 3] {
            let replicas: Vec<_> = (0..dp).map(|d| task.replica_gradient(&params, d, dp)).collect();
            let mean = mean_gradient(&replicas);
            for (g, want) in mean.iter().zip(&numeric) {
                assert!(g.max_abs_diff(want) < tol, "dp={dp}: {:e}", g.max_abs_diff(want));
            }
        }
    }

    #[test]
    fn quadratic_gradient() {
        let q = Quadratic::new(&QuadraticParams { m: 5, n: 4, p: 7 }, 1);
        check(&q, 1e-7);
        assert_eq!(q.loss(&q.init()), q.b.frobenius_norm().powi(2) / 7.0);
    }

    #[test]
    fn quadratic_optimum_is_zero() {
        let p = QuadraticParams { m: 5, n: 4, p: 7 };
        let q = Quadratic::new(&p, 1);
        let target = normal_matrix(1, Purpose::Task, 1, 5, 4).scale(0.5);
        assert!(q.loss(&[target]) < 1e-28);
    }

    #[test]
    fn factorization_gradient() {
        check(&Factorization::new(&FactorizationParams { m: 6, n: 5, k: 2 }, 2), 1e-7);
    }

    #[test]
    fn mlp_gradient() {
        let p = MlpParams {
            dim: 3,
            classes: 3,
            samples: 12,
            hidden: 5,
            separation: 2.0,
        };
        check(&MlpBlobs::new(&p, 3), 1e-6);
    }

    #[test]
    fn mlp_initial_loss_is_near_uniform() {
        let t = MlpBlobs::new(&MlpParams::default(), 0);
        let l = t.loss(&t.init());
        assert!(l.is_finite() && (l - 4f64.ln()).abs() < 1.0, "{l}");
    }
}
