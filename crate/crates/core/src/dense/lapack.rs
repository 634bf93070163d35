//! Thin safe wrappers over the LAPACK routines the dense kernels need.
//! Complex matrices are passed as column-major slices of `Complex<f64>`,
//! which has the same layout as LAPACK's `double complex`.

use lapack_sys::__BindgenComplex as Zc;
use std::os::raw::{c_char, c_int};

use crate::{CMat, LyapError, Result, C64};

fn ptr(m: &mut CMat) -> *mut Zc<f64> {
    m.as_mut_slice().as_mut_ptr() as *mut Zc<f64>
}

fn cptr(m: &CMat) -> *const Zc<f64> {
    m.as_slice().as_ptr() as *const Zc<f64>
}

extern "C" {
    fn zgemm_(
        transa: *const c_char,
        transb: *const c_char,
        m: *const c_int,
        n: *const c_int,
        k: *const c_int,
        alpha: *const Zc<f64>,
        a: *const Zc<f64>,
        lda: *const c_int,
        b: *const Zc<f64>,
        ldb: *const c_int,
        beta: *const Zc<f64>,
        c: *mut Zc<f64>,
        ldc: *const c_int,
    );
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    T,
    C,
}

impl Op {
    fn code(self) -> c_char {
        (match self {
            Op::N => b'N',
            Op::T => b'T',
            Op::C => b'C',
        }) as c_char
    }
}

/// `op(A) op(B)` through BLAS `zgemm`.
pub fn gemm(ta: Op, a: &CMat, tb: Op, b: &CMat) -> CMat {
    let (m, ka) = if ta == Op::N { a.shape() } else { (a.ncols(), a.nrows()) };
    let (kb, n) = if tb == Op::N { b.shape() } else { (b.ncols(), b.nrows()) };
    assert_eq!(ka, kb, "gemm inner dimensions");
    let mut c = CMat::zeros(m, n);
    if m == 0 || n == 0 || ka == 0 {
        return c;
    }
    let one = Zc { re: 1.0, im: 0.0 };
    let zero = Zc { re: 0.0, im: 0.0 };
    let (mm, nn, kk) = (dim(m), dim(n), dim(ka));
    let (lda, ldb, ldc) = (dim(a.nrows().max(1)), dim(b.nrows().max(1)), dim(m));
    unsafe {
        zgemm_(&ta.code(), &tb.code(), &mm, &nn, &kk, &one, cptr(a), &lda, cptr(b), &ldb, &zero, ptr(&mut c), &ldc);
    }
    c
}

/// `op(A) x` through BLAS `zgemm` with one column.
pub fn gemv(ta: Op, a: &CMat, x: &crate::CVec) -> crate::CVec {
    let (m, ka) = if ta == Op::N { a.shape() } else { (a.ncols(), a.nrows()) };
    assert_eq!(ka, x.len(), "gemv inner dimension");
    let mut y = crate::CVec::zeros(m);
    if m == 0 || ka == 0 {
        return y;
    }
    let one = Zc { re: 1.0, im: 0.0 };
    let zero = Zc { re: 0.0, im: 0.0 };
    let (mm, nn, kk) = (dim(m), 1, dim(ka));
    let (lda, ldb, ldc) = (dim(a.nrows().max(1)), dim(ka), dim(m));
    let xp = x.as_slice().as_ptr() as *const Zc<f64>;
    let yp = y.as_mut_slice().as_mut_ptr() as *mut Zc<f64>;
    unsafe {
        zgemm_(&ta.code(), &Op::N.code(), &mm, &nn, &kk, &one, cptr(a), &lda, xp, &ldb, &zero, yp, &ldc);
    }
    y
}

fn dim(n: usize) -> c_int {
    c_int::try_from(n).expect("matrix dimension fits in a LAPACK integer")
}

/// Complex Schur form `A = U T U^H` (`zgees`). Returns `(U, T)`.
pub(crate) fn schur(a: &CMat) -> Result<(CMat, CMat)> {
    let n = a.nrows();
    let mut t = a.clone();
    let mut u = CMat::zeros(n, n);
    let mut w = vec![C64::new(0.0, 0.0); n];
    let mut rwork = vec![0.0; n.max(1)];
    let mut bwork: Vec<c_int> = vec![0; n.max(1)];
    let (nn, ld) = (dim(n), dim(n.max(1)));
    let mut sdim: c_int = 0;
    let mut info: c_int = 0;
    let jobvs = b'V' as c_char;
    let sort = b'N' as c_char;
    let mut query = [C64::new(0.0, 0.0)];
    let lwork_q: c_int = -1;
    unsafe {
        lapack_sys::zgees_(
            &jobvs,
            &sort,
            None,
            &nn,
            ptr(&mut t),
            &ld,
            &mut sdim,
            w.as_mut_ptr() as *mut Zc<f64>,
            ptr(&mut u),
            &ld,
            query.as_mut_ptr() as *mut Zc<f64>,
            &lwork_q,
            rwork.as_mut_ptr(),
            bwork.as_mut_ptr(),
            &mut info,
        );
    }
    let lwork = (query[0].re as usize).max(2 * n).max(1);
    let mut work = vec![C64::new(0.0, 0.0); lwork];
    let lw = dim(lwork);
    unsafe {
        lapack_sys::zgees_(
            &jobvs,
            &sort,
            None,
            &nn,
            ptr(&mut t),
            &ld,
            &mut sdim,
            w.as_mut_ptr() as *mut Zc<f64>,
            ptr(&mut u),
            &ld,
            work.as_mut_ptr() as *mut Zc<f64>,
            &lw,
            rwork.as_mut_ptr(),
            bwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(LyapError::NonConvergence);
    }
    // zgees leaves rounding garbage below the diagonal untouched by design;
    // make T exactly triangular.
    for j in 0..n {
        for i in j + 1..n {
            t[(i, j)] = C64::new(0.0, 0.0);
        }
    }
    Ok((u, t))
}

/// Solve `T Y + Y T^H = C` for upper triangular `T` (`ztrsyl`), in place.
/// Returns the LAPACK scale factor; the solution is `C / scale`.
pub(crate) fn trsyl_lyap(t: &CMat, c: &mut CMat) -> Result<f64> {
    let n = t.nrows();
    let (nn, ld) = (dim(n), dim(n.max(1)));
    let trana = b'N' as c_char;
    let tranb = b'C' as c_char;
    let isgn: c_int = 1;
    let mut scale = 1.0;
    let mut info: c_int = 0;
    unsafe {
        lapack_sys::ztrsyl_(&trana, &tranb, &isgn, &nn, &nn, cptr(t), &ld, cptr(t), &ld, ptr(c), &ld, &mut scale, &mut info);
    }
    if info < 0 {
        return Err(LyapError::DimensionMismatch(format!("ztrsyl argument {}", -info)));
    }
    // info = 1 means a perturbed eigenvalue sum was used; the caller checks
    // for near-singular pairs beforehand.
    Ok(scale)
}

/// Thin SVD `A = U diag(s) V^H` (`zgesdd`). Returns `(U, s, V^H)` with
/// singular values in descending order.
pub(crate) fn svd(a: &CMat) -> Result<(CMat, Vec<f64>, CMat)> {
    let (m, n) = a.shape();
    let k = m.min(n);
    let mut a = a.clone();
    let mut s = vec![0.0; k];
    let mut u = CMat::zeros(m, k);
    let mut vt = CMat::zeros(k, n);
    let jobz = b'S' as c_char;
    let (mm, nn) = (dim(m), dim(n));
    let (lda, ldu, ldvt) = (dim(m.max(1)), dim(m.max(1)), dim(k.max(1)));
    let mx = m.max(n);
    let lrwork = (5 * k * k + 5 * k).max(2 * mx * k + 2 * k * k + k).max(1);
    let mut rwork = vec![0.0; lrwork];
    let mut iwork: Vec<c_int> = vec![0; 8 * k.max(1)];
    let mut info: c_int = 0;
    let mut query = [C64::new(0.0, 0.0)];
    let lwork_q: c_int = -1;
    unsafe {
        lapack_sys::zgesdd_(
            &jobz,
            &mm,
            &nn,
            ptr(&mut a),
            &lda,
            s.as_mut_ptr(),
            ptr(&mut u),
            &ldu,
            ptr(&mut vt),
            &ldvt,
            query.as_mut_ptr() as *mut Zc<f64>,
            &lwork_q,
            rwork.as_mut_ptr(),
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    let lwork = (query[0].re as usize).max(1);
    let mut work = vec![C64::new(0.0, 0.0); lwork];
    let lw = dim(lwork);
    unsafe {
        lapack_sys::zgesdd_(
            &jobz,
            &mm,
            &nn,
            ptr(&mut a),
            &lda,
            s.as_mut_ptr(),
            ptr(&mut u),
            &ldu,
            ptr(&mut vt),
            &ldvt,
            work.as_mut_ptr() as *mut Zc<f64>,
            &lw,
            rwork.as_mut_ptr(),
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(LyapError::NonConvergence);
    }
    Ok((u, s, vt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(m: usize, n: usize, seed: u64) -> CMat {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(m, n, |_, _| C64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5))
    }

    #[test]
    fn schur_reconstructs() {
        let a = random(30, 30, 1);
        let (u, t) = schur(&a).unwrap();
        assert!((&u * &t * u.adjoint() - &a).norm() < 1e-12 * a.norm());
        assert!((u.adjoint() * &u - CMat::identity(30, 30)).norm() < 1e-12);
    }

    #[test]
    fn schur_of_degenerate_matrix() {
        // shifted low-rank pattern: eigenvalue -10 with high multiplicity
        let n = 120;
        let a = CMat::from_fn(n, n, |i, j| C64::new((((i * 7 + j * 13) % 17) as f64 - 8.0) / 10.0 - if i == j { 10.0 } else { 0.0 }, 0.0));
        let (u, t) = schur(&a).unwrap();
        assert!((&u * &t * u.adjoint() - &a).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn sylvester_solve() {
        let a = random(12, 12, 2);
        let (_, t) = schur(&a).unwrap();
        let c0 = random(12, 12, 3);
        let mut y = c0.clone();
        let scale = trsyl_lyap(&t, &mut y).unwrap();
        let res = &t * &y + &y * t.adjoint() - &c0 * C64::new(scale, 0.0);
        assert!(res.norm() < 1e-12 * c0.norm());
    }

    #[test]
    fn gemm_matches_nalgebra() {
        let a = random(7, 5, 5);
        let b = random(5, 4, 6);
        let bt = random(4, 5, 7);
        assert!((gemm(Op::N, &a, Op::N, &b) - &a * &b).norm() < 1e-13);
        assert!((gemm(Op::N, &a, Op::T, &bt) - &a * bt.transpose()).norm() < 1e-13);
        assert!((gemm(Op::C, &b, Op::N, &b) - b.adjoint() * &b).norm() < 1e-13);
        assert!((gemm(Op::T, &b, Op::C, &a) - b.transpose() * a.adjoint()).norm() < 1e-13);
        let x = crate::CVec::from_column_slice(random(5, 1, 8).as_slice());
        assert!((gemv(Op::N, &a, &x) - &a * &x).norm() < 1e-13);
        let y = crate::CVec::from_column_slice(random(7, 1, 9).as_slice());
        assert!((gemv(Op::C, &a, &y) - a.adjoint() * &y).norm() < 1e-13);
    }

    #[test]
    fn svd_reconstructs() {
        let a = random(9, 6, 4);
        let (u, s, vt) = svd(&a).unwrap();
        let sm = CMat::from_diagonal(&nalgebra::DVector::from_iterator(6, s.iter().map(|&x| C64::new(x, 0.0))));
        assert!((&u * sm * &vt - &a).norm() < 1e-12 * a.norm());
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }
}
