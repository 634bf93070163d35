use crate::{to_complex, LyapError, RMat, Result, C64};

/// Solve `A X + X A^T = -Q` for real `A` by Bartels-Stewart on the complex
/// Schur form `A = U T U^H`.
///
/// With `Y = U^H X U` and `F = U^H Q U` the transformed equation
/// `T Y + Y T^H = -F` is triangular and handed to `ztrsyl`.
pub fn solve_lyap_dense(a: &RMat, q: &RMat) -> Result<RMat> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(LyapError::DimensionMismatch(format!("A is {:?}, Q is {:?}", a.shape(), q.shape())));
    }
    if n == 0 {
        return Ok(RMat::zeros(0, 0));
    }
    let (u, t) = super::lapack::schur(&to_complex(a))?;

    let scale = (0..n).map(|i| t[(i, i)].norm()).fold(0.0, f64::max);
    for i in 0..n {
        for j in 0..n {
            let s = t[(i, i)] + t[(j, j)].conj();
            if s.norm() < 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(LyapError::NearSingularPair { i, j, value: s.norm() });
            }
        }
    }

    let uq = super::gemm(super::Op::C, &u, super::Op::N, &to_complex(q));
    let mut y = -super::gemm(super::Op::N, &uq, super::Op::N, &u);
    let sc = super::lapack::trsyl_lyap(&t, &mut y)?;
    if sc != 1.0 {
        y /= C64::new(sc, 0.0);
    }
    let x = super::gemm(super::Op::N, &super::gemm(super::Op::N, &u, super::Op::N, &y), super::Op::C, &u);
    let xn = x.norm();
    let imag = x.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if imag > 1e-8 * xn.max(f64::MIN_POSITIVE) {
        return Err(LyapError::AccuracyLoss { relres: imag / xn, tol: 1e-8 });
    }
    Ok(x.map(|z| z.re))
}

/// `||A X + X A^T + Q||_F / ||Q||_F`.
pub fn lyap_residual(a: &RMat, x: &RMat, q: &RMat) -> f64 {
    let r = a * x + x * a.transpose() + q;
    r.norm() / q.norm().max(f64::MIN_POSITIVE)
}
