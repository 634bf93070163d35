mod common;

use common::{c, hard_matrix, random_cmat, reference_gmres, rng};
use param_lyap::gcrodr::{gcrodr_solve, GcroDrOptions, LinearOperator, RecycleSpace};
use param_lyap::{CMat, CVec, C64};
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;

fn assert_same_history(ours: &[f64], reference: &[f64]) {
    assert_eq!(ours.len(), reference.len(), "iteration counts differ");
    for (i, (a, b)) in ours.iter().zip(reference).enumerate() {
        assert!((a - b).abs() <= 1e-9 * b + 1e-13, "step {i}: {a:e} vs {b:e}");
    }
}

#[test]
fn no_recycling_reproduces_restarted_gmres() {
    let mut r = rng(201);
    let n = 150;
    let a = hard_matrix(n, &mut r);
    let b = random_cmat(n, 1, &mut r).column(0).into_owned();
    let opts = GcroDrOptions { tol: 1e-10, maxit: 400, restart: 25, recycle: 0 };
    let out = gcrodr_solve(&a, None, &b, None, &opts, None).unwrap();
    let (xref, href) = reference_gmres(&a, None, &b, 25, 1e-10, 400);
    assert!(out.stats.cycles > 1, "the run should restart");
    assert_same_history(&out.stats.history, &href);
    assert!((&out.x - &xref).norm() <= 1e-8 * xref.norm());
    assert!(out.recycle.is_none());
}

#[test]
fn no_recycling_reproduces_right_preconditioned_gmres() {
    let mut r = rng(203);
    let n = 100;
    let a = hard_matrix(n, &mut r);
    let minv = CMat::from_diagonal(&a.diagonal().map(|d| d.inv()));
    let b = random_cmat(n, 1, &mut r).column(0).into_owned();
    let opts = GcroDrOptions { tol: 1e-10, maxit: 300, restart: 15, recycle: 0 };
    let out = gcrodr_solve(&a, Some(&minv), &b, None, &opts, None).unwrap();
    let (_, href) = reference_gmres(&a, Some(&minv), &b, 15, 1e-10, 300);
    assert_same_history(&out.stats.history, &href);
    assert!((&b - &a * &out.x).norm() <= 1e-10 * b.norm());
}

fn sequence(n: usize, count: usize, r: &mut ChaCha8Rng) -> (Vec<CMat>, Vec<CVec>) {
    let a = hard_matrix(n, r);
    let e = random_cmat(n, n, r) * c(1.0 / n as f64);
    let b0 = random_cmat(n, 1, r).column(0).into_owned();
    let db = random_cmat(n, 1, r).column(0).into_owned();
    let mats = (0..count).map(|i| &a + &e * c(0.002 * i as f64)).collect();
    let rhs = (0..count).map(|i| &b0 + &db * c(0.01 * i as f64)).collect();
    (mats, rhs)
}

#[test]
fn recycling_reduces_cumulative_iterations() {
    let mut r = rng(205);
    let (mats, rhs) = sequence(120, 20, &mut r);
    let run = |s: usize| -> usize {
        let opts = GcroDrOptions { tol: 1e-10, maxit: 2000, restart: 30, recycle: s };
        let mut space: Option<RecycleSpace> = None;
        let mut total = 0;
        for (a, b) in mats.iter().zip(&rhs) {
            let out = gcrodr_solve(a, None, b, None, &opts, space.take()).unwrap();
            assert!((b - a * &out.x).norm() <= 1e-10 * b.norm() * 1.0001);
            total += out.stats.iterations;
            space = out.recycle;
        }
        total
    };
    let plain = run(0);
    let recycled = run(8);
    assert!(recycled < plain, "recycled {recycled} vs plain {plain}");
}

#[test]
fn recycle_space_relations() {
    let mut r = rng(207);
    let (mats, rhs) = sequence(80, 3, &mut r);
    let opts = GcroDrOptions { tol: 1e-10, maxit: 1000, restart: 20, recycle: 5 };
    let mut space = None;
    for (a, b) in mats.iter().zip(&rhs) {
        let out = gcrodr_solve(a, None, b, None, &opts, space.take()).unwrap();
        let rs = out.recycle.clone().expect("recycle space");
        assert!(rs.dim() <= 5);
        let k = rs.dim();
        assert!((rs.c.adjoint() * &rs.c - CMat::identity(k, k)).norm() <= 1e-10);
        assert!((a * &rs.u - &rs.c).norm() <= 1e-8 * rs.c.norm());
        space = out.recycle;
    }
}

#[test]
fn iteration_limit_reports_best_iterate() {
    let mut r = rng(209);
    let a = hard_matrix(100, &mut r);
    let b = random_cmat(100, 1, &mut r).column(0).into_owned();
    let opts = GcroDrOptions { tol: 1e-14, maxit: 10, restart: 5, recycle: 0 };
    let err = gcrodr_solve(&a, None, &b, None, &opts, None).unwrap_err();
    assert_eq!(err.best.stats.iterations, 10);
    let rel = (&b - &a * &err.best.x).norm() / b.norm();
    assert!((rel - err.best.stats.relres).abs() <= 1e-12);
    assert!(rel < 1.0);
}

struct Shifted<'a> {
    a: &'a CMat,
    shift: C64,
}

impl LinearOperator for Shifted<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn apply(&self, x: &CVec) -> CVec {
        self.a * x + x * self.shift
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn converged_solutions_meet_the_tolerance(seed in 0u64..1000, n in 5usize..60, restart in 4usize..20, s in 0usize..4, shift in 0.5f64..3.0) {
        let mut r = rng(seed);
        let a = random_cmat(n, n, &mut r) * c(1.0 / (n as f64).sqrt());
        let b = random_cmat(n, 1, &mut r).column(0).into_owned();
        let op = Shifted { a: &a, shift: c(shift + 1.0) };
        let opts = GcroDrOptions { tol: 1e-9, maxit: 2000, restart: restart.max(s + 2), recycle: s };
        let out = gcrodr_solve(&op, None, &b, None, &opts, None).unwrap();
        let res = (&b - op.apply(&out.x)).norm() / b.norm();
        prop_assert!(res <= 1e-9);
        prop_assert!((res - out.stats.relres).abs() <= 1e-12);
        prop_assert_eq!(out.stats.history.len(), out.stats.iterations);
    }
}
