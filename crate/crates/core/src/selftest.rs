//! Quick invariant checks over every module, runnable from the command
//! line without the test harness.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::{synthetic_params, synthetic_problem};
use crate::dense::{lyap_residual, solve_lyap_dense};
use crate::ek::{EkOptions, EkSolver, EkStatus};
use crate::gcrodr::{gcrodr_solve, GcroDrOptions};
use crate::multiagent::{assemble_network, h2_sq, laplacian_alg2, perturbation_single_agent, ring_laplacian, AgentSet, H2Evaluator};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::smw::{NormCache, SmwOffline};
use crate::vibration::{build_rayleigh_model, build_vib_model, Backend, SolverSettings, VibSpec};
use crate::{CMat, CVec, RMat, Result, C64};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub wall_ms: f64,
}

fn rel(a: &RMat, b: &RMat) -> f64 {
    (a - b).norm() / b.norm()
}

fn verdict(value: f64, tol: f64) -> (bool, String) {
    (value <= tol, format!("{value:.3e} (tol {tol:.0e})"))
}

fn dense_oracle() -> Result<(bool, String)> {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let pb = synthetic_problem(40, 2, &mut r)?;
    let x = solve_lyap_dense(&pb.a0, &pb.q)?;
    Ok(verdict(lyap_residual(&pb.a0, &x, &pb.q), 1e-10))
}

fn smw_vs_dense() -> Result<(bool, String)> {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let pb = synthetic_problem(40, 2, &mut r)?;
    let v = synthetic_params(2, &mut r);
    let off = SmwOffline::new(&pb, 20)?;
    let (sol, _) = off.solve(&v, None, &Default::default())?;
    let x = off.assemble(&sol, 1e-8)?;
    Ok(verdict(rel(&x, &pb.solve_dense(&v)?), 1e-8))
}

fn ek_vs_dense() -> Result<(bool, String)> {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let pb = synthetic_problem(80, 2, &mut r)?;
    let v = synthetic_params(2, &mut r);
    let mut s = EkSolver::new(&pb, None, EkOptions::default())?;
    let rec = s.evaluate(&v);
    if rec.status != EkStatus::Accepted {
        return Ok((false, format!("status {:?}", rec.status)));
    }
    let f = rec.f_value.unwrap_or(f64::NAN);
    let dense = pb.solve_dense(&v)?.trace();
    Ok(verdict((f - dense).abs() / dense.abs(), 1e-6))
}

fn norm_identity() -> Result<(bool, String)> {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let pb = synthetic_problem(30, 3, &mut r)?;
    let v = synthetic_params(3, &mut r);
    let c = NormCache::new(&pb.a0, &pb.bl, &pb.br);
    let dense = pb.a_of(&v).norm();
    Ok(verdict((c.norm_a_of(&v) - dense).abs() / dense, 1e-12))
}

fn gcrodr_recycling() -> Result<(bool, String)> {
    let n = 120;
    let base = CMat::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(2.0 + (i as f64) / n as f64, 0.0)
        } else if i + 1 == j || j + 1 == i {
            C64::new(-0.9, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let b = CVec::from_fn(n, |i, _| C64::new(((i * 7) % 11) as f64 - 5.0, 0.0));
    let opts = GcroDrOptions { tol: 1e-10, maxit: 600, restart: 20, recycle: 5 };
    let plain = GcroDrOptions { recycle: 0, ..opts.clone() };
    let (mut with, mut without) = (0, 0);
    let mut space = None;
    for step in 0..5 {
        let a = &base + CMat::identity(n, n) * C64::new(0.01 * step as f64, 0.0);
        let o = gcrodr_solve(&a, None, &b, None, &opts, space).map_err(|f| f.error)?;
        with += o.stats.iterations;
        space = o.recycle;
        without += gcrodr_solve(&a, None, &b, None, &plain, None).map_err(|f| f.error)?.stats.iterations;
    }
    Ok((with < without, format!("{with} iterations with recycling, {without} without")))
}

fn vibration_seed() -> Result<(bool, String)> {
    let m = build_vib_model(&VibSpec::standard(10, 3, 2, 15))?;
    let res = lyap_residual(&m.a0, &m.x0, &m.q);
    let r = build_rayleigh_model(&m.m, &m.k, &crate::vibration::damper_geometry(&m.spec)?, 0.02, 0.01)?;
    let res2 = lyap_residual(&r.a0, &r.x0, &r.q);
    Ok(verdict(res.max(res2), 1e-10))
}

fn laplacian() -> Result<(bool, String)> {
    let l = laplacian_alg2(200)?;
    let sym = (&l - l.transpose()).amax();
    let rows = (0..200).map(|i| l.row(i).sum().abs()).fold(0.0, f64::max);
    let min_eig = l.symmetric_eigenvalues().min();
    Ok((sym == 0.0 && rows == 0.0 && min_eig >= -1e-10, format!("asymmetry {sym}, row sums {rows}, min eigenvalue {min_eig:.3e}")))
}

fn h2() -> Result<(bool, String)> {
    let i2 = RMat::identity(2, 2);
    let one = h2_sq(&(-&i2), &i2, &i2)?;
    let m = 6;
    let net = assemble_network(&ring_laplacian(m)?, &AgentSet::example(m))?;
    let pert = perturbation_single_agent(2, m, 2)?;
    let e = RMat::identity(2 * m, 2 * m);
    let v = [1.1, -2.9, 3.1];
    let settings = SolverSettings::default();
    let dense = H2Evaluator::new(&net, &pert, &e, None, Backend::Dense, &settings)?.evaluate(&v)?.h2_sq;
    let smw = H2Evaluator::new(&net, &pert, &e, None, Backend::Smw, &settings)?.evaluate(&v)?.h2_sq;
    let err = ((smw - dense) / dense).abs().max((one - 1.0).abs());
    Ok(verdict(err, 1e-8))
}

fn simplex() -> Result<(bool, String)> {
    let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2);
    let r = nelder_mead(f, &[0.0, 0.0], &NelderMeadOptions::with_tol(1e-8))?;
    Ok(verdict((r.x[0] - 1.0).abs().max((r.x[1] + 2.0).abs()), 1e-4))
}

type CheckFn = fn() -> Result<(bool, String)>;

/// Run every check; a check that errors counts as failed.
pub fn run_selftest() -> Vec<Check> {
    let checks: [(&'static str, CheckFn); 10] = [
        ("dense Lyapunov residual", dense_oracle),
        ("SMW solution vs dense", smw_vs_dense),
        ("extended Krylov trace vs dense", ek_vs_dense),
        ("Frobenius norm expansion", norm_identity),
        ("GCRO-DR recycling reduces iterations", gcrodr_recycling),
        ("vibration seed solutions", vibration_seed),
        ("benchmark Laplacian invariants", laplacian),
        ("H2 evaluation", h2),
        ("Nelder-Mead on a quadratic", simplex),
        ("complex kernels", complex_kernels),
    ];
    checks
        .iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let (passed, detail) = match f() {
                Ok(x) => x,
                Err(e) => (false, format!("error: {e}")),
            };
            Check { name, passed, detail, wall_ms: start.elapsed().as_secs_f64() * 1e3 }
        })
        .collect()
}

fn complex_kernels() -> Result<(bool, String)> {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let pb = synthetic_problem(25, 1, &mut r)?;
    let eig = crate::dense::eig_general(&crate::to_complex(&pb.a0))?;
    let a = crate::to_complex(&pb.a0);
    let res = (&a * &eig.vectors - &eig.vectors * CMat::from_diagonal(&CVec::from_vec(eig.values.clone()))).norm() / a.norm();
    Ok(verdict(res, 1e-10))
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
