mod common;

use common::*;
use param_lyap::dense::LuFactors;
use param_lyap::ek::{ek_sweep, EkBasis, EkOptions, EkSolver, EkStatus};
use param_lyap::problem::{delta_rhs, rhs_factor};
use param_lyap::smw::{NormCache, SmwOffline};
use param_lyap::{ParamLyapProblem, RMat};

fn basis_for(pb: &ParamLyapProblem) -> (EkBasis, RMat) {
    let x0 = pb.seed_solution().unwrap();
    let p = rhs_factor(&x0, &pb.bl, &pb.br);
    let b = EkBasis::init(&pb.a0, LuFactors::new(&pb.a0).unwrap(), &p, &pb.bl, &pb.br, 1e-12, true).unwrap();
    (b, p)
}

fn dense_delta(pb: &ParamLyapProblem, v: &[f64]) -> RMat {
    let x0 = pb.seed_solution().unwrap();
    let av = pb.a_of(v);
    let rhs = delta_rhs(&rhs_factor(&x0, &pb.bl, &pb.br), v);
    kron_lyap(&av, &(-rhs))
}

#[test]
fn basis_invariants_hold_while_growing() {
    let mut r = rng(41);
    let pb = random_problem(80, 2, &mut r);
    let (mut b, p) = basis_for(&pb);
    let g = b.g().clone();
    let v1 = b.v_all().columns(0, g.nrows()).into_owned();
    assert!((&v1 * &g - &p).norm() <= 1e-10 * p.norm());
    for _ in 0..5 {
        b.expand().unwrap();
        assert!(b.orthogonality_loss() <= 1e-10);
        assert!(b.arnoldi_residual() <= 1e-8, "arnoldi {}", b.arnoldi_residual());
        assert!(b.t_deviation() <= 1e-10);
        let vm = b.v();
        assert!((&vm * b.bl_m() - &pb.bl).norm() <= 1e-10 * pb.bl.norm());
        assert!(b.total_dim() <= 4 * (b.m() + 1) * 2);
    }
}

#[test]
fn full_dimension_reproduces_dense_correction() {
    let mut r = rng(43);
    let pb = random_problem(18, 2, &mut r);
    let mut s = EkSolver::new(&pb, None, EkOptions::default()).unwrap();
    let mut b = s.basis().clone();
    while b.expand().is_ok() {}
    assert_eq!(b.dim(), 18);
    // the solver saturates the same way
    loop {
        let v = random_params(2, &mut r);
        let rec = s.evaluate(&v);
        assert_eq!(rec.status, EkStatus::Accepted);
        if s.basis().is_saturated() {
            break;
        }
    }
    let v = random_params(2, &mut r);
    let y = s.solve_projected(&v).unwrap().y;
    let vm = s.basis().v();
    let xd = &vm * &y * vm.transpose();
    assert!(rel_diff(&xd, &dense_delta(&pb, &v)) <= 1e-8);
    assert!(s.backward_error(&y, &v) <= 1e-12);
    // T is a similarity transform of A0
    let t = s.basis().t_m();
    assert!(rel_diff(&(&vm * t * vm.transpose()), &pb.a0) <= 1e-10);
}

#[test]
fn space_is_nested_for_every_parameter() {
    let mut r = rng(47);
    let pb = random_problem(120, 2, &mut r);
    let (mut b, p) = basis_for(&pb);
    for _ in 0..3 {
        b.expand().unwrap();
    }
    let m = b.m();
    let vm = b.v();
    let proj = |x: &RMat| (x - &vm * (vm.transpose() * x)).norm() / x.norm();
    for _ in 0..3 {
        let v = random_params(2, &mut r);
        let av = pb.a_of(&v);
        let lu = LuFactors::new(&av).unwrap();
        let mut direct = p.clone();
        let mut inverse = p.clone();
        for j in 1..=m {
            inverse = lu.solve(&inverse);
            assert!(proj(&inverse) <= 1e-8, "A(v)^-{j} P: {}", proj(&inverse));
            if j < m {
                direct = &av * direct;
                assert!(proj(&direct) <= 1e-8, "A(v)^{j} P: {}", proj(&direct));
            }
        }
    }
}

#[test]
fn backward_error_matches_dense_residual() {
    let mut r = rng(53);
    for trial in 0..4 {
        let n = 60 + 40 * trial;
        let k = 1 + trial % 3;
        let pb = random_problem(n, k, &mut r);
        let mut s = EkSolver::new(&pb, None, EkOptions::default()).unwrap();
        let x0 = pb.seed_solution().unwrap();
        let p = rhs_factor(&x0, &pb.bl, &pb.br);
        let v = random_params(k, &mut r);
        let y = s.solve_projected(&v).unwrap().y;
        let vm = s.basis().v();
        let xd = &vm * &y * vm.transpose();
        let av = pb.a_of(&v);
        let rhs = delta_rhs(&p, &v);
        let res = &av * &xd + &xd * av.transpose() - &rhs;
        let dense = res.norm() / (2.0 * av.norm() * xd.norm() + rhs.norm());
        let formula = s.backward_error(&y, &v);
        assert!((formula - dense).abs() <= 1e-10 * dense, "n={n}: {formula} vs {dense}");
    }
}

#[test]
fn backward_error_of_zero_is_zero() {
    let mut r = rng(59);
    let pb = random_problem(30, 2, &mut r);
    let s = EkSolver::new(&pb, None, EkOptions::default()).unwrap();
    let d = s.basis().dim();
    assert_eq!(s.backward_error(&RMat::zeros(d, d), &[0.2, 0.1]), 0.0);
}

#[test]
fn norm_identity_on_unequal_factors() {
    let mut r = rng(61);
    for _ in 0..10 {
        let pb = random_problem(25, 3, &mut r);
        let c = NormCache::new(&pb.a0, &pb.bl, &pb.br);
        let v = random_params(3, &mut r);
        let dense = pb.a_of(&v).norm();
        assert!((c.norm_a_of(&v) - dense).abs() <= 1e-10 * dense);
    }
}

#[test]
fn trace_variants() {
    let mut r = rng(67);
    let n = 40;
    let pb = random_problem(n, 2, &mut r);
    let plain = EkSolver::new(&pb, None, EkOptions::default()).unwrap();
    let with_id = EkSolver::new(&pb, Some(RMat::identity(n, n)), EkOptions::default()).unwrap();
    let e = random_matrix(n, n, &mut r);
    let with_e = EkSolver::new(&pb, Some(e.clone()), EkOptions::default()).unwrap();
    let d = plain.basis().dim();
    assert_eq!(plain.trace(&RMat::identity(d, d)), d as f64);
    let y = random_matrix(d, d, &mut r);
    assert!((plain.trace(&y) - with_id.trace(&y)).abs() <= 1e-14 * y.norm() * d as f64);
    let vm = plain.basis().v();
    let full = &vm * &y * vm.transpose();
    assert!((full.trace() - y.trace()).abs() <= 1e-13 * y.norm() * (d as f64).sqrt());
    let dense = (&e * &full).trace();
    assert!((with_e.trace(&y) - dense).abs() <= 1e-12 * (&e * &full).norm());
}

#[test]
fn tiny_parameter_gives_small_correction() {
    let mut r = rng(71);
    let pb = random_problem(30, 2, &mut r);
    let mut s = EkSolver::new(&pb, None, EkOptions::default()).unwrap();
    let y1 = s.solve_projected(&[1e-10, 1e-10]).unwrap().y;
    let y2 = s.solve_projected(&[2e-10, 2e-10]).unwrap().y;
    assert!(y1.norm() < 1e-8);
    assert!((y2.norm() / y1.norm() - 2.0).abs() < 1e-6);
    assert!(rel_diff(&y1, &y1.transpose()) < 1e-10);
}

#[test]
fn sweep_agrees_with_smw_and_dense() {
    let mut r = rng(73);
    let n = 150;
    let pb = random_problem(n, 2, &mut r);
    let v = random_params(2, &mut r);
    let rep = ek_sweep(&pb, &[v.clone(), v.clone()], None, EkOptions::default()).unwrap();
    let dense = pb.solve_dense(&v).unwrap().trace();
    let off = SmwOffline::new(&pb, 10).unwrap();
    let (sol, _) = off.solve(&v, None, &Default::default()).unwrap();
    let smw = off.trace(&sol, &off.trace_cache(None));
    let a = &rep.records[0];
    let b = &rep.records[1];
    assert_eq!(a.status, EkStatus::Accepted);
    assert!(a.backward_error <= 1e-8);
    let fa = a.f_value.unwrap();
    assert!((fa - dense).abs() <= 1e-6 * dense.abs(), "{fa} vs {dense}");
    assert!((smw - dense).abs() <= 1e-9 * dense.abs());
    assert_eq!(b.expansions, 0);
    assert_eq!(b.basis_dim, a.basis_dim);
    assert!((b.f_value.unwrap() - fa).abs() <= 1e-10 * fa.abs());
}

#[test]
fn explicit_t_check_agrees() {
    let mut r = rng(79);
    let pb = random_problem(50, 3, &mut r);
    let opts = EkOptions { verify_t: true, ..Default::default() };
    let mut s = EkSolver::new(&pb, None, opts).unwrap();
    for _ in 0..3 {
        let v = random_params(3, &mut r);
        let rec = s.evaluate(&v);
        assert_eq!(rec.status, EkStatus::Accepted);
    }
    assert!(s.basis().t_deviation() <= 1e-10);
}
