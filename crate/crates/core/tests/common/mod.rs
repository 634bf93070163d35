#![allow(dead_code)]

use nalgebra::DVector;
use param_lyap::{CMat, CVec, ParamLyapProblem, RMat, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Brute-force Lyapunov solve through the `n^2 x n^2` Kronecker system.
pub fn kron_lyap(a: &RMat, q: &RMat) -> RMat {
    let n = a.nrows();
    let id = RMat::identity(n, n);
    let big = id.kronecker(a) + a.kronecker(&id);
    let rhs = DVector::from_column_slice((-q).as_slice());
    let x = big.lu().solve(&rhs).expect("nonsingular Kronecker system");
    RMat::from_column_slice(n, n, x.as_slice())
}

pub fn complex(a: &RMat) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}

/// Random stable `A0`: a negative definite symmetric part plus a skew part.
pub fn stable_matrix(n: usize, r: &mut ChaCha8Rng) -> RMat {
    let g = RMat::from_fn(n, n, |_, _| r.random::<f64>() - 0.5);
    let s = RMat::from_fn(n, n, |_, _| r.random::<f64>() - 0.5);
    -(&g * g.transpose()) / (n as f64) - RMat::identity(n, n) + (&s - s.transpose()) * 0.5
}

pub fn random_matrix(m: usize, n: usize, r: &mut ChaCha8Rng) -> RMat {
    RMat::from_fn(m, n, |_, _| r.random::<f64>() - 0.5)
}

pub fn random_problem(n: usize, k: usize, r: &mut ChaCha8Rng) -> ParamLyapProblem {
    let a0 = stable_matrix(n, r);
    let sc = 2.0 / (n as f64).sqrt();
    let bl = random_matrix(n, k, r) * sc;
    let br = random_matrix(n, k, r) * sc;
    let c = random_matrix(n, 2, r);
    let q = &c * c.transpose() + RMat::identity(n, n) * 0.1;
    ParamLyapProblem::new(a0, bl, br, q).unwrap()
}

/// Parameters small enough that `A(v)` stays stable for `random_problem`.
pub fn random_params(k: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..k).map(|_| 0.05 + 0.25 * r.random::<f64>()).collect()
}

pub fn rel_diff(a: &RMat, b: &RMat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// `N^T L0^{-1} M` assembled from its Kronecker definition.
pub fn smw_blocks_kron(lambda: &[C64], lb: &CMat, rq: &CMat) -> CMat {
    let n = lambda.len();
    let idn = CMat::identity(n, n);
    let m1 = lb.kronecker(&idn);
    let m2 = idn.kronecker(lb);
    let n1 = rq.kronecker(&idn);
    let n2 = idn.kronecker(rq);
    let mut m = CMat::zeros(n * n, m1.ncols() * 2);
    m.columns_mut(0, m1.ncols()).copy_from(&m1);
    m.columns_mut(m1.ncols(), m2.ncols()).copy_from(&m2);
    let mut nn = CMat::zeros(n * n, n1.ncols() * 2);
    nn.columns_mut(0, n1.ncols()).copy_from(&n1);
    nn.columns_mut(n1.ncols(), n2.ncols()).copy_from(&n2);
    // L0 = I (x) Lambda + Lambda (x) I, diagonal with entry (j*n + i) = l_i + l_j
    let mut linv_m = m.clone();
    for j in 0..n {
        for i in 0..n {
            let d = (lambda[i] + lambda[j]).inv();
            linv_m.row_mut(j * n + i).apply(|e| *e *= d);
        }
    }
    nn.transpose() * linv_m
}

pub fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn random_cmat(n: usize, m: usize, r: &mut ChaCha8Rng) -> CMat {
    CMat::from_fn(n, m, |_, _| C64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5))
}

/// Nonnormal test matrix with a cluster of small eigenvalues that slows
/// restarted GMRES down.
pub fn hard_matrix(n: usize, r: &mut ChaCha8Rng) -> CMat {
    let mut a = random_cmat(n, n, r) * c(0.4 / (n as f64).sqrt());
    for i in 0..n {
        let d = if i < 6 { 0.01 * (i + 1) as f64 } else { 1.0 + i as f64 / n as f64 };
        a[(i, i)] += c(d);
    }
    a
}

/// Restarted GMRES(m): Arnoldi with modified Gram-Schmidt and a dense
/// least-squares solve of the Hessenberg system after every step.
/// Returns the history of `||b - A x_j|| / ||b||` estimates.
pub fn reference_gmres(a: &CMat, minv: Option<&CMat>, b: &CVec, m: usize, tol: f64, maxit: usize) -> (CVec, Vec<f64>) {
    let n = b.len();
    let bnorm = b.norm();
    let op = |v: &CVec| -> CVec {
        match minv {
            Some(p) => a * (p * v),
            None => a * v,
        }
    };
    let mut x = CVec::zeros(n);
    let mut hist = vec![];
    let mut its = 0;
    loop {
        let r = b - a * &x;
        let beta = r.norm();
        if beta / bnorm <= tol || its >= maxit {
            return (x, hist);
        }
        let mut v = vec![r / c(beta)];
        let mut h = CMat::zeros(m + 1, m);
        let mut y = CVec::zeros(0);
        let mut j = 0;
        while j < m && its < maxit {
            let mut w = op(&v[j]);
            for i in 0..=j {
                let hij = v[i].dotc(&w);
                h[(i, j)] = hij;
                w -= &v[i] * hij;
            }
            // second pass, accumulated into the same column
            for i in 0..=j {
                let e = v[i].dotc(&w);
                h[(i, j)] += e;
                w -= &v[i] * e;
            }
            let wn = w.norm();
            h[(j + 1, j)] = c(wn);
            v.push(w / c(wn));
            j += 1;
            its += 1;
            let hj = h.view((0, 0), (j + 1, j)).into_owned();
            let mut rhs = CVec::zeros(j + 1);
            rhs[0] = c(beta);
            let qr = hj.clone().qr();
            let qtb = qr.q().adjoint() * &rhs;
            y = qr.r().solve_upper_triangular(&qtb.rows(0, j).into_owned()).unwrap();
            let res = (&rhs - &hj * &y).norm();
            hist.push(res / bnorm);
            if res / bnorm <= tol {
                break;
            }
        }
        let mut corr = CVec::zeros(n);
        for i in 0..j {
            corr += &v[i] * y[i];
        }
        x += match minv {
            Some(p) => p * corr,
            None => corr,
        };
    }
}
