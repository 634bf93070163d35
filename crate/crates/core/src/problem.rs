use crate::dense::solve_lyap_dense;
use crate::{LyapError, RMat, Result};

/// `A(v) X + X A(v)^T = -Q` with `A(v) = A0 - Bl diag(v) Br^T`.
///
/// `x0` optionally carries a closed-form solution of the `v = 0` equation;
/// when absent it is computed with the dense solver.
#[derive(Clone, Debug)]
pub struct ParamLyapProblem {
    pub a0: RMat,
    pub bl: RMat,
    pub br: RMat,
    pub q: RMat,
    pub x0: Option<RMat>,
}

impl ParamLyapProblem {
    pub fn new(a0: RMat, bl: RMat, br: RMat, q: RMat) -> Result<Self> {
        let n = a0.nrows();
        let k = bl.ncols();
        if a0.ncols() != n {
            return Err(LyapError::DimensionMismatch(format!("A0 must be square, got {:?}", a0.shape())));
        }
        if bl.nrows() != n || br.shape() != (n, k) {
            return Err(LyapError::DimensionMismatch(format!("Bl is {:?}, Br is {:?}, n = {n}", bl.shape(), br.shape())));
        }
        if k == 0 || k > n {
            return Err(LyapError::DimensionMismatch(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
        }
        if q.shape() != (n, n) {
            return Err(LyapError::DimensionMismatch(format!("Q is {:?}, n = {n}", q.shape())));
        }
        Ok(ParamLyapProblem { a0, bl, br, q, x0: None })
    }

    pub fn with_x0(mut self, x0: RMat) -> Result<Self> {
        if x0.shape() != self.a0.shape() {
            return Err(LyapError::DimensionMismatch(format!("X0 is {:?}", x0.shape())));
        }
        self.x0 = Some(x0);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a0.nrows()
    }

    pub fn k(&self) -> usize {
        self.bl.ncols()
    }

    pub fn check_params(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.k() {
            return Err(LyapError::DimensionMismatch(format!("expected {} parameters, got {}", self.k(), v.len())));
        }
        Ok(())
    }

    /// `A0 - Bl diag(v) Br^T`.
    pub fn a_of(&self, v: &[f64]) -> RMat {
        let mut bd = self.bl.clone();
        for (j, &vj) in v.iter().enumerate() {
            bd.column_mut(j).scale_mut(vj);
        }
        &self.a0 - bd * self.br.transpose()
    }

    /// The seed solution `X0`, from the closed form if one was supplied.
    pub fn seed_solution(&self) -> Result<RMat> {
        match &self.x0 {
            Some(x) => Ok(x.clone()),
            None => solve_lyap_dense(&self.a0, &self.q),
        }
    }

    /// Reference solution by the dense solver.
    pub fn solve_dense(&self, v: &[f64]) -> Result<RMat> {
        self.check_params(v)?;
        solve_lyap_dense(&self.a_of(v), &self.q)
    }
}

/// `P = [X0 Br, Bl]`; the correction `X - X0` solves
/// `A(v) Xd + Xd A(v)^T = P (J (x) D) P^T` where `J = [[0, 1], [1, 0]]`.
pub fn rhs_factor(x0: &RMat, bl: &RMat, br: &RMat) -> RMat {
    let k = bl.ncols();
    let n = bl.nrows();
    let mut p = RMat::zeros(n, 2 * k);
    p.columns_mut(0, k).copy_from(&(x0 * br));
    p.columns_mut(k, k).copy_from(bl);
    p
}

/// `P (J (x) diag(v)) P^T = P1 D P2^T + P2 D P1^T` for `P = [P1, P2]`.
pub fn delta_rhs(p: &RMat, v: &[f64]) -> RMat {
    let k = v.len();
    let mut pd = p.clone();
    for j in 0..k {
        pd.column_mut(j).scale_mut(v[j]);
        pd.column_mut(k + j).scale_mut(v[j]);
    }
    let mut out = RMat::zeros(p.nrows(), p.nrows());
    out.gemm(1.0, &pd.columns(0, k), &p.columns(k, k).transpose(), 0.0);
    out.gemm(1.0, &pd.columns(k, k), &p.columns(0, k).transpose(), 1.0);
    out
}
