//! One test per acceptance criterion. Each prints a single result line to
//! stderr (visible without `--nocapture`) and then asserts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use dion_core::accounting::{
    estimate_replicated_overhead, matrices_per_stage, predict_dion_flops, predict_muon_flops, seconds_to_days,
    CostModelInput,
};
use dion_core::dist::{
    distributed_orthogonalize, double_dion_step, randomized_cholesky_qr, weight_spec, DoubleDionConfig,
    DoubleDionState, SketchMatrix,
};
use dion_core::linalg::{householder_qr, DenseMatrix, NoFlops};
use dion_core::mesh::{Axis, Coord, CostLedger, DeviceMesh, Dim, ShardSpec, ShardedMatrix};
use dion_core::optim::{lr_scale_factor, sketch_rows, Orientation, ParamKind, ParamSpec};
use dion_core::rng::{normal_matrix, Purpose};
use dion_harness::ablation::{run_ablation, AblationKind};
use dion_harness::costs::{default_shapes, report_costs};
use dion_harness::equivalence::verify_equivalence;
use dion_harness::{config, RunConfig};

fn report(id: &str, name: &str, pass: bool, detail: String) {
    let line = format!("criterion {id:>2} {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {id} {name}: {detail}");
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

#[test]
fn c01_distributed_matches_centralized() {
    let start = Instant::now();
    let report_ = verify_equivalence(&RunConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let standard: Vec<_> = report_.runs.iter().filter(|r| r.orientation == Orientation::Standard).collect();
    let worst = standard.iter().map(|r| r.max_weight_divergence).fold(0.0, f64::max);
    let shape_ok = report_.m == 16 && report_.n == 12 && report_.rank == 4 && report_.steps == 20;
    let meshes_ok = standard.len() == 8 && standard.iter().all(|r| r.weight_divergence.len() == 20);
    let pass = shape_ok && meshes_ok && standard.iter().all(|r| r.weight_divergence.iter().all(|&d| d < 1e-9)) && secs < 10.0;
    report(
        "1",
        "distributed equals centralized",
        pass,
        format!("8 meshes x 20 steps, max weight gap {worst:e} < 1e-9, {secs:.2} s < 10 s"),
    );
}

#[test]
fn c02_distributed_orthogonalize_matches_central() {
    let (m, r) = (16, 4);
    let k = sketch_rows(1.25, r);
    let mut worst = 0.0f64;
    for tp in [1, 2, 4] {
        let mesh = DeviceMesh::new(1, 1, tp).unwrap();
        let spec = ShardSpec::new(m, r, Some(Axis::Tp), None);
        for i in 0..50u64 {
            let p = normal_matrix(11, Purpose::Task, i, m, r);
            let sketch = SketchMatrix::new(11, i, k, m);
            let central = randomized_cholesky_qr(&p, &sketch, &mut NoFlops).unwrap();
            let sharded = ShardedMatrix::shard(&p, spec, mesh).unwrap();
            let dist = distributed_orthogonalize(&sharded, &sketch, &mut CostLedger::new()).unwrap();
            for j in 0..tp {
                let c = Coord { dp: 0, fs: 0, tp: j };
                let rows = spec.block(&mesh, c, Dim::Rows);
                let want = central.rows_range(rows.start, rows.end);
                worst = worst.max(dist.local(c).max_abs_diff(&want));
            }
        }
    }
    report(
        "2",
        "sharded randomized Cholesky QR",
        worst < 1e-10,
        format!("50 inputs 16x4 at TP 1, 2, 4, max shard gap {worst:e} < 1e-10"),
    );
}

#[test]
fn c03_decoupled_momentum() {
    let report_ = verify_equivalence(&RunConfig::default()).unwrap();
    let standard: Vec<_> = report_.runs.iter().filter(|r| r.orientation == Orientation::Standard).collect();
    let worst = standard.iter().map(|r| r.max_momentum_divergence).fold(0.0, f64::max);
    let pass = standard.len() == 8 && standard.iter().all(|r| r.momentum_divergence.iter().all(|&d| d < 1e-9));
    report(
        "3",
        "DP-mean momentum equals centralized",
        pass,
        format!("8 meshes x 20 steps, max momentum gap {worst:e} < 1e-9"),
    );
}

#[test]
fn c04_communication_ledgers_are_exact() {
    let shapes = default_shapes();
    let costs = report_costs(&shapes, 0).unwrap();
    let on = |size: usize, v: usize| if size > 1 { v as u64 } else { 0 };
    let mut table_ok = true;
    for s in &costs.shapes {
        let mesh: DeviceMesh = s.shape.mesh.parse().unwrap();
        let (dp, fs, tp) = (mesh.size(Axis::Dp), mesh.size(Axis::Fs), mesh.size(Axis::Tp));
        let (m, n, r) = (s.shape.m, s.shape.n, s.shape.r);
        let k = sketch_rows(1.25, r);
        table_ok &= (s.dion.dp_elements, s.dion.fs_elements, s.dion.tp_elements)
            == (on(dp, (m + n) * r), on(fs, (m + 1) * r), on(tp, 2 * n * r + k * r + r * r));
        table_ok &= (s.muon.dp_elements, s.muon.fs_elements, s.muon.tp_elements) == (on(dp, m * n), on(fs, m * n), on(tp, m * n));
        table_ok &= (s.adam.dp_elements, s.adam.fs_elements, s.adam.tp_elements) == (on(dp, m * n), 0, 0);
    }
    let pass = shapes.len() == 12 && costs.pass && table_ok;
    report(
        "4",
        "ledgers equal predicted integers",
        pass,
        format!("{} shapes, {} mismatches, closed-form rows {}", shapes.len(), costs.mismatches.len(), if table_ok { "equal" } else { "differ" }),
    );
}

#[test]
fn c05_flop_model() {
    let costs = report_costs(&default_shapes(), 0).unwrap();
    let exact = |name: &str| costs.shapes.iter().all(|s| s.checks.iter().any(|c| c.name == name && c.pass));
    let matmul_ok = exact("dion_matmul_flops");
    let muon_ok = exact("muon_flops");
    let worst = costs.shapes.iter().map(|s| s.dion_total_flops_relative_error.abs()).fold(0.0, f64::max);
    let mut symbolic_ok = true;
    for m in 1..=256usize {
        for n in 1..=m {
            let (mf, nf) = (m as f64, n as f64);
            symbolic_ok &= 14.5 * mf * nf * nf + 13.0 / 6.0 * nf.powi(3) < 20.0 * mf * nf * nf + 10.0 * nf.powi(3);
            let inp = CostModelInput::new(m, n, n, 1, 1, 1);
            symbolic_ok &= predict_dion_flops(&inp) < predict_muon_flops(&inp);
        }
    }
    let pass = matmul_ok && muon_ok && worst < 0.01 && symbolic_ok;
    report(
        "5",
        "FLOP model",
        pass,
        format!(
            "8mnr/(fs*tp) exact {matmul_ok}, Muon 20mn²+10n³ exact {muon_ok}, total rel err {worst:e} < 1e-2, worst case below Muon on m,n ≤ 256 {symbolic_ok}"
        ),
    );
}

#[test]
fn c06_orthonormality() {
    let shapes: Vec<(usize, usize)> = [8, 16, 24, 32, 48, 64]
        .iter()
        .flat_map(|&m| [1, 2, 4, 8, 12, 16].into_iter().filter(move |&r| r <= m).map(move |r| (m, r)))
        .collect();
    let (mut worst_rcqr, mut worst_hh) = (0.0f64, 0.0f64);
    for i in 0..1000u64 {
        let (m, r) = shapes[i as usize % shapes.len()];
        let p = normal_matrix(21, Purpose::Task, i, m, r);
        let sketch = SketchMatrix::new(21, i, sketch_rows(1.25, r), m);
        let q = randomized_cholesky_qr(&p, &sketch, &mut NoFlops).unwrap();
        worst_rcqr = worst_rcqr.max(q.orthonormality_error());
        worst_hh = worst_hh.max(householder_qr(&p, &mut NoFlops).unwrap().q.orthonormality_error());
    }
    report(
        "6",
        "orthonormality",
        worst_rcqr < 1e-8 && worst_hh < 1e-10,
        format!("1000 calls up to 64x16, randomized Cholesky QR {worst_rcqr:e} < 1e-8, Householder {worst_hh:e} < 1e-10"),
    );
}

#[test]
fn c07_ablation_directions() {
    let noisy = config::load(&configs().join("ablation.toml"), &[]).unwrap();
    let exact = config::load(&configs().join("rank_sweep.toml"), &[]).unwrap();
    let p = noisy.matrix_param();
    let d = p.d_out.min(p.d_in);
    let svd = run_ablation(AblationKind::SvdVsPoweriter, &noisy).unwrap();
    let ef = run_ablation(AblationKind::ErrorFeedback, &noisy).unwrap();
    let sweep = run_ablation(AblationKind::RankSweep, &exact).unwrap();
    let gap = (svd.arms[0].final_loss - svd.arms[1].final_loss).abs() / svd.arms[0].final_loss.min(svd.arms[1].final_loss);
    let ranks_ok = svd.arms.iter().all(|a| a.rank == d / 2) && ef.arms.iter().all(|a| a.rank == d / 4);
    let svd_ok = svd.pass && gap <= 0.05;
    let ef_ok = ef.pass && ef.arms[1].final_loss > ef.arms[0].final_loss;
    let sweep_ok = sweep.pass && sweep.arms.windows(2).all(|w| w[1].final_loss <= w[0].final_loss * 1.02);
    let curve: Vec<String> = sweep.arms.iter().map(|a| format!("r{}={:.3e}", a.rank, a.final_loss)).collect();
    report(
        "7",
        "ablation directions",
        ranks_ok && svd_ok && ef_ok && sweep_ok,
        format!(
            "SVD vs PI gap {gap:.4} ≤ 0.05 at r={}, EF on {:.4e} < off {:.4e} at r={}, rank sweep {} within 2%",
            d / 2,
            ef.arms[0].final_loss,
            ef.arms[1].final_loss,
            d / 4,
            curve.join(" ")
        ),
    );
}

#[test]
fn c08_scale_factor_table() {
    let dims = [1usize, 2, 3, 16, 64, 768, 1024, 3072, 4096, 50_000];
    let mut ok = true;
    for &d_out in &dims {
        for &d_in in &dims {
            let f = |kind| lr_scale_factor(&ParamSpec::new(kind, d_out, d_in));
            ok &= f(ParamKind::Weight) == (d_out as f64 / d_in as f64).sqrt();
            ok &= f(ParamKind::Unembedding) == 1.0 / (d_in as f64).sqrt();
            ok &= f(ParamKind::Bias) == 1.0 && f(ParamKind::Embedding) == 1.0 && f(ParamKind::Normalization) == 1.0;
        }
    }
    let unembed = lr_scale_factor(&ParamSpec::new(ParamKind::Unembedding, 50_000, 1024));
    let mlp = lr_scale_factor(&ParamSpec::new(ParamKind::Weight, 3072, 768));
    ok &= unembed == 0.03125 && mlp == 2.0;
    report(
        "8",
        "learning-rate scale factors",
        ok,
        format!("{}x{} grid exact, unembedding d_in=1024 -> {unembed}, 3072x768 weight -> {mlp}", dims.len(), dims.len()),
    );
}

#[test]
fn c09_double_dion() {
    let (m, n) = (16, 12);
    let mesh = DeviceMesh::new(2, 2, 2).unwrap();
    let grads = |t: usize| {
        let per: Vec<DenseMatrix> = (0..2).map(|d| normal_matrix(31, Purpose::Gradient, (t * 2 + d) as u64, m, n)).collect();
        ShardedMatrix::shard_per_replica(&per, weight_spec(m, n, Orientation::Standard), mesh).unwrap()
    };
    let x0 = normal_matrix(31, Purpose::Weights, 0, m, n);
    let (mut replicated, mut ledger_ok) = (true, true);
    for delayed in [false, true] {
        let cfg = DoubleDionConfig { r1: 2, r2: 4, delayed, learning_rate: 0.02, ..Default::default() };
        let mut s = DoubleDionState::new(&x0, &cfg, 32, mesh).unwrap();
        for t in 0..20 {
            let mut ledger = CostLedger::new();
            s = double_dion_step(&s, &grads(t), &cfg, &mut ledger).unwrap();
            replicated &= s.x.is_replicated_along(Axis::Dp) && s.m2.is_replicated_along(Axis::Dp) && s.q2.is_replicated_along(Axis::Dp);
            ledger_ok &= ledger.snapshot().dp_elements == ((m + n) * cfg.r1) as u64;
        }
    }

    // zeroing the step-t gradient must leave the step-t weights unchanged
    let cfg = DoubleDionConfig { r1: 2, r2: 2, delayed: true, learning_rate: 0.02, ..Default::default() };
    let probe = 6;
    let mut a = DoubleDionState::new(&x0, &cfg, 32, mesh).unwrap();
    let mut b = a.clone();
    for t in 0..=probe {
        let ga = grads(t);
        let gb = if t == probe { ShardedMatrix::shard(&DenseMatrix::zeros(m, n), *ga.spec(), mesh).unwrap() } else { ga.clone() };
        a = double_dion_step(&a, &ga, &cfg, &mut CostLedger::new()).unwrap();
        b = double_dion_step(&b, &gb, &cfg, &mut CostLedger::new()).unwrap();
    }
    let causal = a.x == b.x && a.pending != b.pending;
    report(
        "9",
        "Double Dion",
        replicated && ledger_ok && causal,
        format!("stage-2 state replicated over 20 steps {replicated}, DP ledger (m+n)·r1 {ledger_ok}, delayed causality probe {causal}"),
    );
}

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn run_cli(args: &[&str], out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_dion"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("DION_OUTPUT_DIR")
        .output()
        .unwrap();
    assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
}

#[test]
fn c10_cli_outputs_are_deterministic() {
    let ablation = configs().join("ablation.toml");
    let sweep = configs().join("rank_sweep.toml");
    let (ablation, sweep) = (ablation.to_str().unwrap(), sweep.to_str().unwrap());
    let commands: Vec<Vec<&str>> = vec![
        vec!["run", "--seed", "3"],
        vec!["run", "--set", "task=\"mlp_blobs\"", "--set", "optimizer=\"dion_distributed\"", "--set", "mesh.dp=2", "--set", "mesh.tp=2", "--set", "steps=20"],
        vec!["verify-equivalence"],
        vec!["ablate", "--kind", "svd-vs-poweriter", "--config", ablation],
        vec!["ablate", "--kind", "error-feedback", "--config", ablation],
        vec!["ablate", "--kind", "rank-sweep", "--config", sweep],
        vec!["report-costs"],
    ];
    let mut files = 0;
    let mut differing = Vec::new();
    for args in &commands {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_cli(args, a.path());
        run_cli(args, b.path());
        let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
        files += ta.len();
        if ta.is_empty() || ta != tb {
            differing.push(args.join(" "));
        }
    }
    report(
        "10",
        "byte-identical reruns",
        differing.is_empty(),
        format!("{} commands, {files} files compared, differing: {differing:?}", commands.len()),
    );
}

#[test]
fn c11_replicated_overhead_arithmetic() {
    let per_stage = matrices_per_stage(126, 3, 16).round();
    let seconds = estimate_replicated_overhead(1.0, per_stage, 1_000_000);
    let days = seconds_to_days(seconds);
    let rendered = format!("≈{days:.0} days");
    report(
        "11",
        "replicated-overhead arithmetic",
        per_stage == 24.0 && seconds == 2.4e7 && rendered == "≈278 days",
        format!("{per_stage} s per step x 1e6 steps = {seconds:e} s, {rendered}"),
    );
}
