use nalgebra::linalg::LU;
use nalgebra::Dyn;

use crate::{CMat, CVec, LyapError, Result, C64};

const EXPLICIT_INVERSE_MAX: usize = 64;
const COND_LIMIT: f64 = 1e13;

/// Diagonalization `A = Q0 diag(values) Q0^{-1}`.
///
/// Eigenvector columns have unit 2-norm. The inverse is held as an explicit
/// matrix for small `n` and as an LU factorization otherwise.
#[derive(Clone, Debug)]
pub struct EigDecomp {
    pub values: Vec<C64>,
    pub vectors: CMat,
    inverse: Inverse,
    cond_estimate: f64,
}

#[derive(Clone, Debug)]
enum Inverse {
    Explicit(CMat),
    Lu(LU<C64, Dyn, Dyn>),
}

impl EigDecomp {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// `Q0^{-1} B`.
    pub fn solve(&self, b: &CMat) -> CMat {
        match &self.inverse {
            Inverse::Explicit(inv) => inv * b,
            Inverse::Lu(lu) => lu.solve(b).expect("checked nonsingular at construction"),
        }
    }

    /// Rough 1-norm condition estimate of the eigenvector matrix.
    pub fn cond_estimate(&self) -> f64 {
        self.cond_estimate
    }
}

/// Eigendecomposition of a general (diagonalizable) complex matrix.
///
/// Uses a complex Schur form followed by triangular back substitution for
/// the eigenvectors of `T`. Tiny denominators are perturbed in the usual
/// way; a near-zero numerator over a near-zero denominator is taken as an
/// exact zero, which picks a valid basis inside a repeated eigenspace.
pub fn eig_general(a: &CMat) -> Result<EigDecomp> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LyapError::DimensionMismatch(format!("eig_general needs a square matrix, got {}x{}", n, a.ncols())));
    }
    if n == 0 {
        return Ok(EigDecomp { values: vec![], vectors: CMat::zeros(0, 0), inverse: Inverse::Explicit(CMat::zeros(0, 0)), cond_estimate: 1.0 });
    }
    let (u, t) = super::lapack::schur(a)?;

    let tnorm = t.norm().max(f64::MIN_POSITIVE);
    let smin = (f64::EPSILON * tnorm).max(f64::MIN_POSITIVE * 1e3);
    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();

    let mut y = CMat::zeros(n, n);
    for k in 0..n {
        let lk = t[(k, k)];
        y[(k, k)] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut num = -t[(i, k)];
            for j in i + 1..k {
                num -= t[(i, j)] * y[(j, k)];
            }
            let den = t[(i, i)] - lk;
            y[(i, k)] = if den.norm() >= smin {
                num / den
            } else if num.norm() <= 100.0 * smin {
                C64::new(0.0, 0.0)
            } else {
                num / C64::new(smin, 0.0)
            };
        }
        // keep the column bounded to avoid overflow in long recurrences
        let m = y.column(k).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if m > 1e100 {
            let s = 1.0 / m;
            y.column_mut(k).scale_mut(s);
        }
    }
    let mut q = super::gemm(super::Op::N, &u, super::Op::N, &y);
    for mut c in q.column_iter_mut() {
        let nrm = c.norm();
        if nrm > 0.0 {
            c.unscale_mut(nrm);
        }
    }

    let lu = q.clone().lu();
    let udiag_min = (0..n).map(|i| lu.u()[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if udiag_min == 0.0 || !udiag_min.is_finite() {
        return Err(LyapError::IllConditionedEigenbasis(f64::INFINITY));
    }
    let cond_estimate = estimate_cond(&q, &lu);
    if cond_estimate > COND_LIMIT || !cond_estimate.is_finite() {
        return Err(LyapError::IllConditionedEigenbasis(cond_estimate));
    }
    let inverse = if n <= EXPLICIT_INVERSE_MAX {
        Inverse::Explicit(lu.try_inverse().ok_or(LyapError::IllConditionedEigenbasis(f64::INFINITY))?)
    } else {
        Inverse::Lu(lu)
    };
    Ok(EigDecomp { values, vectors: q, inverse, cond_estimate })
}

fn norm1(a: &CMat) -> f64 {
    a.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

// Hager-style lower bound on ||A^{-1}||_1 with a few refinement steps.
fn estimate_cond(a: &CMat, lu: &LU<C64, Dyn, Dyn>) -> f64 {
    let n = a.nrows();
    let mut x = CVec::from_element(n, C64::new(1.0 / n as f64, 0.0));
    let mut est = 0.0;
    let adj = lu_adjoint_solver(a);
    for _ in 0..4 {
        let y = match lu.solve(&x) {
            Some(y) => y,
            None => return f64::INFINITY,
        };
        let ynorm: f64 = y.iter().map(|z| z.norm()).sum();
        if ynorm <= est {
            break;
        }
        est = ynorm;
        let sgn = y.map(|z| if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) });
        let z = match adj.solve(&sgn) {
            Some(z) => z,
            None => return f64::INFINITY,
        };
        let (jmax, _) = z.iter().enumerate().fold((0, -1.0), |acc, (i, v)| if v.norm() > acc.1 { (i, v.norm()) } else { acc });
        x = CVec::zeros(n);
        x[jmax] = C64::new(1.0, 0.0);
    }
    est * norm1(a)
}

fn lu_adjoint_solver(a: &CMat) -> LU<C64, Dyn, Dyn> {
    a.adjoint().lu()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::to_complex;
    use rand::{Rng, SeedableRng};

    fn random(n: usize, seed: u64) -> CMat {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, 0.0))
    }

    #[test]
    fn reconstructs_random_matrix() {
        for (n, seed) in [(5, 1), (40, 2), (90, 3)] {
            let a = random(n, seed);
            let e = eig_general(&a).unwrap();
            let lam = CMat::from_diagonal(&CVec::from_vec(e.values.clone()));
            let r = &a * &e.vectors - &e.vectors * lam;
            assert!(r.norm() < 1e-11 * a.norm(), "n={n} res={}", r.norm());
            let id = e.solve(&e.vectors);
            assert!((id - CMat::identity(n, n)).norm() < 1e-9);
        }
    }

    #[test]
    fn repeated_eigenvalues_of_diagonalizable_matrix() {
        // S diag(-1,-1,-2,-2) S^{-1} with a non-orthogonal S
        let s = to_complex(&crate::RMat::from_row_slice(4, 4, &[1.0, 2.0, 0.0, 1.0, 0.0, 1.0, 3.0, 0.0, 1.0, 0.0, 1.0, 2.0, 0.5, 1.0, 0.0, 1.0]));
        let d = to_complex(&crate::RMat::from_diagonal(&crate::RVec::from_vec(vec![-1.0, -1.0, -2.0, -2.0])));
        let a = &s * d * s.clone().try_inverse().unwrap();
        let e = eig_general(&a).unwrap();
        let lam = CMat::from_diagonal(&CVec::from_vec(e.values.clone()));
        assert!((&a * &e.vectors - &e.vectors * lam).norm() < 1e-10);
        assert!(e.cond_estimate() < 1e6);
    }

    #[test]
    fn defective_matrix_is_reported() {
        let a = to_complex(&crate::RMat::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]));
        assert!(matches!(eig_general(&a), Err(LyapError::IllConditionedEigenbasis(_))));
    }
}
