use nalgebra::linalg::LU;
use nalgebra::{ComplexField, DMatrix, Dyn};

use crate::{CMat, LyapError, RMat, Result};

/// LU factorization with an explicit singularity check on the pivots.
#[derive(Clone, Debug)]
pub struct LuFactors<T: ComplexField<RealField = f64>> {
    lu: LU<T, Dyn, Dyn>,
    n: usize,
}

impl<T: ComplexField<RealField = f64>> LuFactors<T> {
    /// Factor `a`; pivots below `1e-14 * max pivot` count as singular.
    pub fn new(a: &DMatrix<T>) -> Result<Self> {
        Self::with_threshold(a, 1e-14)
    }

    pub fn with_threshold(a: &DMatrix<T>, rel: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LyapError::DimensionMismatch(format!("LU needs a square matrix, got {}x{}", n, a.ncols())));
        }
        let lu = a.clone().lu();
        if n > 0 {
            let u = lu.u();
            let piv: Vec<f64> = (0..n).map(|i| u[(i, i)].clone().modulus()).collect();
            let big = piv.iter().cloned().fold(0.0, f64::max);
            let small = piv.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(big > 0.0) || !(small > rel * big) || !small.is_finite() {
                return Err(LyapError::SingularMatrix);
            }
        }
        Ok(LuFactors { lu, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        self.lu.solve(b).expect("factor checked at construction")
    }

    pub fn solve_vec(&self, b: &nalgebra::DVector<T>) -> nalgebra::DVector<T> {
        self.lu.solve(b).expect("factor checked at construction")
    }
}

/// `A ~ left * right^T` (plain transpose) with `left = U_r Sigma_r`,
/// `right = conj(V_r)`.
#[derive(Clone, Debug)]
pub struct LowRankFactors {
    pub left: CMat,
    pub right: CMat,
    pub singular_values: Vec<f64>,
}

impl LowRankFactors {
    pub fn rank(&self) -> usize {
        self.left.ncols()
    }

    pub fn empty(m: usize, n: usize) -> Self {
        LowRankFactors { left: CMat::zeros(m, 0), right: CMat::zeros(n, 0), singular_values: vec![] }
    }

    pub fn to_dense(&self) -> CMat {
        &self.left * self.right.transpose()
    }
}

/// Rank-`r` truncated SVD. `r` is clamped to `min(m, n)`.
pub fn tsvd(a: &CMat, r: usize) -> LowRankFactors {
    let (m, n) = a.shape();
    let r = r.min(m).min(n);
    if r == 0 {
        return LowRankFactors::empty(m, n);
    }
    let (u, sv, vt) = match super::lapack::svd(a) {
        Ok(f) => f,
        Err(_) => {
            let svd = a.clone().svd(true, true);
            (svd.u.expect("requested"), svd.singular_values.as_slice().to_vec(), svd.v_t.expect("requested"))
        }
    };
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap().then(i.cmp(&j)));
    let mut left = CMat::zeros(m, r);
    let mut right = CMat::zeros(n, r);
    let mut vals = Vec::with_capacity(r);
    for (c, &idx) in order.iter().take(r).enumerate() {
        let s = sv[idx];
        vals.push(s);
        left.set_column(c, &(u.column(idx) * crate::C64::new(s, 0.0)));
        right.set_column(c, &vt.row(idx).transpose());
    }
    LowRankFactors { left, right, singular_values: vals }
}

/// Result of orthogonalizing a block `W` against an orthonormal basis `V`,
/// so that `W = V * coeffs + q * r`.
#[derive(Clone, Debug)]
pub struct OrthBlock {
    pub q: RMat,
    /// `V^T W`, accumulated over both passes.
    pub coeffs: RMat,
    /// Upper trapezoidal, one row per kept column.
    pub r: RMat,
    /// Indices of the columns of `W` that produced a new direction.
    pub kept: Vec<usize>,
}

/// Orthogonalize the columns of `w` against the orthonormal columns of
/// `basis` and against each other, two passes of modified Gram-Schmidt.
/// A column is dropped when what is left of it falls below
/// `tol * ||W||_F`.
pub fn orth_against(basis: &RMat, w: &RMat, tol: f64) -> OrthBlock {
    let n = w.nrows();
    let c = basis.ncols();
    let p = w.ncols();
    assert_eq!(basis.nrows(), n);
    let wnorm = w.norm();
    let mut coeffs = RMat::zeros(c, p);
    let mut r = RMat::zeros(p, p);
    let mut qcols: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(p);
    let mut kept = Vec::new();
    for j in 0..p {
        let mut x = w.column(j).into_owned();
        for _pass in 0..2 {
            for i in 0..c {
                let h = basis.column(i).dot(&x);
                coeffs[(i, j)] += h;
                x.axpy(-h, &basis.column(i), 1.0);
            }
            for (qi, q) in qcols.iter().enumerate() {
                let h = q.dot(&x);
                r[(qi, j)] += h;
                x.axpy(-h, q, 1.0);
            }
        }
        let nrm = x.norm();
        if nrm > tol * wnorm && nrm > 0.0 {
            r[(qcols.len(), j)] = nrm;
            qcols.push(x / nrm);
            kept.push(j);
        }
    }
    let k = qcols.len();
    let q = if k == 0 { RMat::zeros(n, 0) } else { RMat::from_columns(&qcols) };
    OrthBlock { q, coeffs, r: r.rows(0, k).into_owned(), kept }
}

/// Orthonormal basis of `range(B)` with rank-revealing column dropping.
#[derive(Clone, Debug)]
pub struct BlockQr {
    pub q: RMat,
    pub r: RMat,
    pub kept: Vec<usize>,
}

pub fn block_qr_deflate(b: &RMat, tol: f64) -> BlockQr {
    let o = orth_against(&RMat::zeros(b.nrows(), 0), b, tol);
    BlockQr { q: o.q, r: o.r, kept: o.kept }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;
    use rand::{Rng, SeedableRng};

    #[test]
    fn tsvd_full_rank_reconstructs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a = CMat::from_fn(12, 9, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let f = tsvd(&a, 9);
        assert!((f.to_dense() - &a).norm() < 1e-12);
        assert!(f.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let f3 = tsvd(&a, 3);
        let err = (f3.to_dense() - &a).norm();
        let tail: f64 = f.singular_values[3..].iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!((err - tail).abs() < 1e-10);
    }

    #[test]
    fn deflation_drops_dependent_columns() {
        let b = RMat::from_row_slice(4, 3, &[1.0, 2.0, 0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let qr = block_qr_deflate(&b, 1e-12);
        assert_eq!(qr.kept, vec![0, 2]);
        assert!((qr.q.transpose() * &qr.q - RMat::identity(2, 2)).norm() < 1e-14);
        let bk = b.select_columns(&[0, 1, 2]);
        assert!((&qr.q * &qr.r - bk).norm() < 1e-14);
    }

    #[test]
    fn singular_lu_is_rejected() {
        let a = RMat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(LuFactors::new(&a).unwrap_err(), LyapError::SingularMatrix);
    }
}
