use dion_core::dist::{distributed_orthogonalize, randomized_cholesky_qr, SketchMatrix};
use dion_core::linalg::{householder_qr, matmul, DenseMatrix, NoFlops};
use dion_core::mesh::{
    all_gather, all_reduce, Axis, CostLedger, DeviceMesh, Dim, ReduceOp, ShardSpec, ShardedMatrix,
};
use dion_core::optim::{column_normalize, dion_step_centralized, DionConfig, DionState, Orientation};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn axis_choice() -> impl Strategy<Value = Option<Axis>> {
    prop_oneof![Just(None), Just(Some(Axis::Dp)), Just(Some(Axis::Fs)), Just(Some(Axis::Tp))]
}

fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    DenseMatrix::random_normal(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #[test]
    fn shard_assemble_round_trip(
        dp in 1usize..3, fs in 1usize..4, tp in 1usize..4,
        rb in 1usize..4, cb in 1usize..4,
        ra in axis_choice(), ca in axis_choice(),
        seed in any::<u64>(),
    ) {
        prop_assume!(ra.is_none() || ra != ca);
        let mesh = DeviceMesh::new(dp, fs, tp).unwrap();
        let rows = rb * 12;
        let cols = cb * 12;
        let full = random(rows, cols, seed);
        let spec = ShardSpec::new(rows, cols, ra, ca);
        let s = ShardedMatrix::shard(&full, spec, mesh).unwrap();
        let back = s.assemble();
        prop_assert_eq!(back.as_slice(), full.as_slice());
    }

    #[test]
    fn all_reduce_is_linear(tp in 1usize..5, a in -3.0f64..3.0, seed in any::<u64>()) {
        let mesh = DeviceMesh::new(1, 1, tp).unwrap();
        let spec = ShardSpec::replicated(3, 2);
        let x = ShardedMatrix::from_fn(spec, mesh, |c| random(3, 2, seed ^ c.tp as u64)).unwrap();
        let y = ShardedMatrix::from_fn(spec, mesh, |c| random(3, 2, seed.wrapping_add(99) ^ c.tp as u64)).unwrap();
        let combo = x.zip_local(&y, spec, |_, xl, yl| {
            let mut o = xl.scale(a);
            o.add_scaled(1.0, yl)?;
            Ok::<_, dion_core::mesh::MeshError>(o)
        }).unwrap();
        let mut l = CostLedger::new();
        let lhs = all_reduce(&combo, ReduceOp::Sum, Axis::Tp, &mut l).unwrap();
        let rx = all_reduce(&x, ReduceOp::Sum, Axis::Tp, &mut l).unwrap();
        let ry = all_reduce(&y, ReduceOp::Sum, Axis::Tp, &mut l).unwrap();
        for c in mesh.coords() {
            let mut rhs = rx.local(c).scale(a);
            rhs.add_scaled(1.0, ry.local(c)).unwrap();
            prop_assert!(lhs.local(c).max_abs_diff(&rhs) < 1e-12);
        }
    }

    #[test]
    fn gather_then_split_is_identity(fs in 1usize..4, seed in any::<u64>()) {
        let mesh = DeviceMesh::new(1, fs, 1).unwrap();
        let full = random(12, 5, seed);
        let s = ShardedMatrix::shard(&full, ShardSpec::new(12, 5, Some(Axis::Fs), None), mesh).unwrap();
        let g = all_gather(&s, Axis::Fs, Dim::Rows, &mut CostLedger::new()).unwrap();
        prop_assert_eq!(g.split(Dim::Rows, Axis::Fs).unwrap(), s);
    }

    #[test]
    fn error_feedback_forms_agree(seed in any::<u64>(), mu in 0.01f64..0.99) {
        let b = random(6, 5, seed);
        let p = random(6, 2, seed.wrapping_add(1));
        let r = random(5, 2, seed.wrapping_add(2));
        let prt = matmul(&p, &r, false, true, &mut NoFlops).unwrap();
        let mut lhs = b.scale(mu);
        lhs.add_scaled(1.0 - mu, &b.sub(&prt).unwrap()).unwrap();
        let mut rhs = b.clone();
        rhs.add_scaled(-(1.0 - mu), &prt).unwrap();
        let scale = 1.0f64.max(b.max_abs()).max(prt.max_abs());
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-14 * scale * 4.0);
    }

    #[test]
    fn dion_update_structure(seed in any::<u64>(), r in 1usize..5) {
        let x = random(9, 6, seed);
        let g = random(9, 6, seed.wrapping_add(5));
        let cfg = DionConfig { rank: r, ..Default::default() };
        let state = DionState::new(x, r, seed, Orientation::Standard);
        let next = dion_step_centralized(&state, &g, &cfg, &mut CostLedger::new()).unwrap();
        for j in 0..r {
            let norm: f64 = next.q.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12);
        }
        // the update is P·Q'ᵀ with orthonormal P, so ‖ΔX‖_F² = η²·(m/n)·‖Q'‖_F² = η²·(m/n)·r
        let dx = next.x.sub(&state.x).unwrap().frobenius_norm();
        let want = cfg.learning_rate * (9.0f64 / 6.0).sqrt() * (r as f64).sqrt();
        prop_assert!((dx - want).abs() < 1e-10);
    }

    #[test]
    fn column_normalize_gives_unit_or_zero(seed in any::<u64>(), zero_col in 0usize..3) {
        let mut a = random(7, 3, seed);
        for i in 0..7 { a.set(i, zero_col, 0.0); }
        let out = column_normalize(&a, 1e-30);
        prop_assert!(out.is_finite());
        for j in 0..3 {
            let n: f64 = out.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            if j == zero_col { prop_assert_eq!(n, 0.0); } else { prop_assert!((n - 1.0).abs() < 1e-12); }
        }
    }

    #[test]
    fn randomized_qr_agrees_with_householder(seed in any::<u64>(), r in 1usize..6, extra in 0usize..30) {
        let m = r + extra + 1;
        let p = random(m, r, seed);
        let k = dion_core::optim::sketch_rows(1.25, r);
        let out = randomized_cholesky_qr(&p, &SketchMatrix::new(seed, 0, k, m), &mut NoFlops).unwrap();
        prop_assert!(out.orthonormality_error() < 1e-8);
        let hh = householder_qr(&p, &mut NoFlops).unwrap().q;
        let proj = |q: &DenseMatrix| matmul(q, q, false, true, &mut NoFlops).unwrap();
        prop_assert!(proj(&out).max_abs_diff(&proj(&hh)) < 1e-7);
    }

    #[test]
    fn distributed_orthogonalize_is_shard_exact(seed in any::<u64>(), tp_pow in 0u32..3) {
        let tp = 1usize << tp_pow;
        let p = random(16, 4, seed);
        let sketch = SketchMatrix::new(seed, 3, 5, 16);
        let central = randomized_cholesky_qr(&p, &sketch, &mut NoFlops).unwrap();
        let mesh = DeviceMesh::new(1, 1, tp).unwrap();
        let s = ShardedMatrix::shard(&p, ShardSpec::new(16, 4, Some(Axis::Tp), None), mesh).unwrap();
        let out = distributed_orthogonalize(&s, &sketch, &mut CostLedger::new()).unwrap();
        let expected = ShardedMatrix::shard(&central, *s.spec(), mesh).unwrap();
        for c in mesh.coords() {
            prop_assert!(out.local(c).max_abs_diff(expected.local(c)) < 1e-10);
        }
    }
}
