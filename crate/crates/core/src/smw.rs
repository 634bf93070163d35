//! Sherman-Morrison-Woodbury solver for
//! `A(v) Xd + Xd A(v)^T = P (J (x) D(v)) P^T`.
//!
//! With `A0 = Q0 diag(l) Q0^{-1}` and the Cauchy kernel `L`, the
//! correction is
//!
//! ```text
//! Xd(v) = sum_i v_i Z_i + Q0 (L o (W1 Lb^T + Lb W2)) Q0^T
//! ```
//!
//! where `Lb = Q0^{-1} Bl`, `R = Q0^T Br` and `w = [vec W1; vec W2]`
//! (`W1` is `n x k`, `W2` is `k x n`) solves the `2nk` system
//! `(D(v)^{-1} - N^T L0^{-1} M) w = sum_i v_i [vec(Zt_i R); vec(R^T Zt_i)]`.
//! All transposes are plain transposes even though the data is complex.
//!
//! Everything independent of `v` is built once in [`SmwOffline::new`];
//! each parameter costs one preconditioner setup and one recycled Krylov
//! solve.

use crate::dense::{cauchy_matrix, eig_general, gemm, gemv, log_norm, tsvd, EigDecomp, LowRankFactors, LuFactors, Op};
use crate::gcrodr::{gcrodr_solve, GcroDrOptions, LinearOperator, RecycleSpace, SolveStats};
use crate::problem::{delta_rhs, rhs_factor};
use crate::{to_complex, CMat, CVec, LyapError, ParamLyapProblem, RMat, RVec, Result, C64};

#[derive(Clone, Debug)]
pub struct SmwOptions {
    /// Rank of the off-diagonal approximations in the preconditioner.
    pub pbar: usize,
    pub precondition: bool,
    pub gcrodr: GcroDrOptions,
    /// Relative residual accepted by [`SmwOffline::assemble`].
    pub residual_tol: f64,
}

impl Default for SmwOptions {
    fn default() -> Self {
        SmwOptions { pbar: 50, precondition: true, gcrodr: GcroDrOptions::default(), residual_tol: 1e-8 }
    }
}

/// Precomputed, parameter independent data.
#[derive(Clone, Debug)]
pub struct SmwOffline {
    n: usize,
    k: usize,
    a0: RMat,
    bl: RMat,
    br: RMat,
    q: Option<RMat>,
    x0: Option<RMat>,
    p: RMat,
    eig: EigDecomp,
    cauchy: CMat,
    lb: CMat,
    rq: CMat,
    ztilde: Vec<CMat>,
    z: Vec<RMat>,
    rhs_parts: Vec<CVec>,
    /// `G_s[t][p] = sum_q L[s][q] Lb[q][p] R[q][t]`, one `k x k` block per `s`.
    /// These are the diagonal entries of the (1,1) block and the blocks of
    /// the (2,2) block of `N^T L0^{-1} M`.
    diag_blocks: Vec<CMat>,
    /// Low rank factors of the system's (1,2) and (2,1) blocks.
    precond: Option<(LowRankFactors, LowRankFactors)>,
    pbar: usize,
}

/// Solution of the SMW linear system for one parameter.
#[derive(Clone, Debug)]
pub struct SmwSolution {
    pub v: Vec<f64>,
    pub w: CVec,
    pub stats: SolveStats,
}

impl SmwOffline {
    /// Offline phase for a full problem: `X0` is the seed solution.
    pub fn new(problem: &ParamLyapProblem, pbar: usize) -> Result<Self> {
        let x0 = problem.seed_solution()?;
        let p = rhs_factor(&x0, &problem.bl, &problem.br);
        let mut off = Self::from_parts(&problem.a0, &problem.bl, &problem.br, &p, pbar)?;
        off.x0 = Some(x0);
        off.q = Some(problem.q.clone());
        Ok(off)
    }

    /// Offline phase for the correction equation alone, with an arbitrary
    /// right-hand side factor `P = [P1, P2]` (`n x 2k`).
    pub fn from_parts(a0: &RMat, bl: &RMat, br: &RMat, p: &RMat, pbar: usize) -> Result<Self> {
        let n = a0.nrows();
        let k = bl.ncols();
        if a0.ncols() != n || bl.nrows() != n || br.shape() != (n, k) || p.shape() != (n, 2 * k) {
            return Err(LyapError::DimensionMismatch(format!("A0 {:?}, Bl {:?}, Br {:?}, P {:?}", a0.shape(), bl.shape(), br.shape(), p.shape())));
        }
        let eig = eig_general(&to_complex(a0))?;
        let cauchy = cauchy_matrix(&eig.values)?;
        let q0 = &eig.vectors;
        let lb = eig.solve(&to_complex(bl));
        let rq = gemm(Op::T, q0, Op::N, &to_complex(br));
        let pt = eig.solve(&to_complex(p));

        let mut ztilde = Vec::with_capacity(k);
        let mut z = Vec::with_capacity(k);
        let mut rhs_parts = Vec::with_capacity(k);
        for i in 0..k {
            let a = pt.column(k + i);
            let b = pt.column(i);
            let outer = a * b.transpose() + b * a.transpose();
            let zt = cauchy.component_mul(&outer);
            let zi = gemm(Op::N, &gemm(Op::N, q0, Op::N, &zt), Op::T, q0);
            z.push(zi.map(|c| c.re));
            let top = gemm(Op::N, &zt, Op::N, &rq);
            let bottom = gemm(Op::T, &rq, Op::N, &zt);
            let mut part = CVec::zeros(2 * n * k);
            part.rows_mut(0, n * k).copy_from_slice(top.as_slice());
            part.rows_mut(n * k, n * k).copy_from_slice(bottom.as_slice());
            rhs_parts.push(part);
            ztilde.push(zt);
        }

        let mut diag_blocks = vec![CMat::zeros(k, k); n];
        for t in 0..k {
            for pp in 0..k {
                let prod = rq.column(t).component_mul(&lb.column(pp));
                let col = &cauchy * prod;
                for s in 0..n {
                    diag_blocks[s][(t, pp)] = col[s];
                }
            }
        }

        let mut off = SmwOffline {
            n,
            k,
            a0: a0.clone(),
            bl: bl.clone(),
            br: br.clone(),
            q: None,
            x0: None,
            p: p.clone(),
            eig,
            cauchy,
            lb,
            rq,
            ztilde,
            z,
            rhs_parts,
            diag_blocks,
            precond: None,
            pbar: 0,
        };
        off.set_pbar(pbar);
        Ok(off)
    }

    /// Recompute the low rank preconditioner factors with a new rank.
    pub fn set_pbar(&mut self, pbar: usize) {
        let nk = self.n * self.k;
        let pbar = pbar.min(nk);
        self.pbar = pbar;
        if pbar == 0 {
            self.precond = None;
            return;
        }
        let (b12, b21) = self.offdiag_dense();
        let f12 = tsvd(&(-b12), pbar);
        let f21 = tsvd(&(-b21), pbar);
        self.precond = Some((f12, f21));
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn pbar(&self) -> usize {
        self.pbar
    }
    pub fn eig(&self) -> &EigDecomp {
        &self.eig
    }
    pub fn cauchy(&self) -> &CMat {
        &self.cauchy
    }
    /// `Q0^{-1} Bl`.
    pub fn lb(&self) -> &CMat {
        &self.lb
    }
    /// `Q0^T Br`.
    pub fn rq(&self) -> &CMat {
        &self.rq
    }
    pub fn p(&self) -> &RMat {
        &self.p
    }
    pub fn x0(&self) -> Option<&RMat> {
        self.x0.as_ref()
    }
    pub fn ztilde(&self) -> &[CMat] {
        &self.ztilde
    }
    pub fn z(&self) -> &[RMat] {
        &self.z
    }
    pub fn diag_blocks(&self) -> &[CMat] {
        &self.diag_blocks
    }
    pub fn precond_factors(&self) -> Option<&(LowRankFactors, LowRankFactors)> {
        self.precond.as_ref()
    }

    fn check_v(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.k {
            return Err(LyapError::DimensionMismatch(format!("expected {} parameters, got {}", self.k, v.len())));
        }
        if let Some(index) = v.iter().position(|&x| x == 0.0) {
            return Err(LyapError::ZeroParameter { index });
        }
        Ok(())
    }

    /// `sum_i v_i [vec(Zt_i R); vec(R^T Zt_i)]`.
    pub fn rhs(&self, v: &[f64]) -> CVec {
        let mut out = CVec::zeros(2 * self.n * self.k);
        for (vi, part) in v.iter().zip(&self.rhs_parts) {
            out.axpy(C64::new(*vi, 0.0), part, C64::new(1.0, 0.0));
        }
        out
    }

    /// `H = L o (W1 Lb^T + Lb W2)` for `x = [vec W1; vec W2]`.
    fn hadamard_core(&self, x: &CVec) -> CMat {
        let (n, k) = (self.n, self.k);
        let w1 = CMat::from_column_slice(n, k, &x.as_slice()[..n * k]);
        let w2 = CMat::from_column_slice(k, n, &x.as_slice()[n * k..]);
        let mut c = gemm(Op::N, &w1, Op::T, &self.lb);
        c += gemm(Op::N, &self.lb, Op::N, &w2);
        c.component_mul_assign(&self.cauchy);
        c
    }

    /// Matrix-free `N^T L0^{-1} M x`.
    pub fn apply_blocks(&self, x: &CVec) -> CVec {
        let (n, k) = (self.n, self.k);
        let h = self.hadamard_core(x);
        let top = gemm(Op::N, &h, Op::N, &self.rq);
        let bottom = gemm(Op::T, &self.rq, Op::N, &h);
        let mut out = CVec::zeros(2 * n * k);
        out.rows_mut(0, n * k).copy_from_slice(top.as_slice());
        out.rows_mut(n * k, n * k).copy_from_slice(bottom.as_slice());
        out
    }

    /// `(D(v)^{-1} - N^T L0^{-1} M) x`.
    pub fn apply_system(&self, v: &[f64], x: &CVec) -> CVec {
        let (n, k) = (self.n, self.k);
        let mut y = -self.apply_blocks(x);
        for t in 0..k {
            let d = 1.0 / v[t];
            for s in 0..n {
                y[t * n + s] += x[t * n + s] * d;
                y[n * k + s * k + t] += x[n * k + s * k + t] * d;
            }
        }
        y
    }

    /// Dense (1,2) and (2,1) blocks of `N^T L0^{-1} M`.
    pub fn offdiag_dense(&self) -> (CMat, CMat) {
        let (n, k) = (self.n, self.k);
        let nk = n * k;
        let mut b12 = CMat::zeros(nk, nk);
        let mut b21 = CMat::zeros(nk, nk);
        // b12[(t,s), (q,p)] = Lb[s,p] L[s,q] R[q,t]
        // b21[(s,t), (p,q)] = R[q,t] L[q,s] Lb[s,p]
        for q in 0..n {
            for p in 0..k {
                let col12 = q * k + p;
                let col21 = p * n + q;
                for t in 0..k {
                    let rqt = self.rq[(q, t)];
                    for s in 0..n {
                        let val = self.lb[(s, p)] * self.cauchy[(s, q)] * rqt;
                        b12[(t * n + s, col12)] = val;
                        b21[(s * k + t, col21)] = val;
                    }
                }
            }
        }
        (b12, b21)
    }

    /// Per-parameter preconditioner, the block approximation
    /// `[[S11, U1 V1^T], [U2 V2^T, S22]]` of the system matrix.
    pub fn preconditioner(&self, v: &[f64]) -> Result<Preconditioner<'_>> {
        self.check_v(v)?;
        Preconditioner::new(self, v)
    }

    /// Solve the SMW system for one parameter, reusing `recycle` from the
    /// previous parameter when given.
    pub fn solve(&self, v: &[f64], recycle: Option<RecycleSpace>, opts: &SmwOptions) -> Result<(SmwSolution, Option<RecycleSpace>)> {
        self.check_v(v)?;
        let b = self.rhs(v);
        let sys = SystemOp { off: self, v };
        let pc = if opts.precondition { Some(Preconditioner::new(self, v)?) } else { None };
        let out = match &pc {
            Some(p) => gcrodr_solve(&sys, Some(p), &b, None, &opts.gcrodr, recycle),
            None => gcrodr_solve(&sys, None, &b, None, &opts.gcrodr, recycle),
        };
        match out {
            Ok(o) => Ok((SmwSolution { v: v.to_vec(), w: o.x, stats: o.stats }, o.recycle)),
            Err(f) => Err(f.error),
        }
    }

    /// Complex correction `Q0 (L o (W1 Lb^T + Lb W2)) Q0^T` plus the `Z` terms.
    fn correction(&self, v: &[f64], w: &CVec) -> Result<RMat> {
        let h = self.hadamard_core(w);
        let q0 = &self.eig.vectors;
        let full = gemm(Op::N, &gemm(Op::N, q0, Op::N, &h), Op::T, q0);
        let nrm = full.norm();
        let imag = full.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if imag > 1e-6 * nrm.max(1e-300) && imag > 1e-12 {
            log::warn!("SMW correction has imaginary part {imag:.3e} (norm {nrm:.3e})");
        }
        let mut xd = full.map(|z| z.re);
        for (vi, zi) in v.iter().zip(&self.z) {
            xd += zi * *vi;
        }
        Ok(xd)
    }

    /// Assemble `X(v)` (or `Xd(v)` when there is no seed solution) and
    /// verify its residual.
    pub fn assemble(&self, sol: &SmwSolution, residual_tol: f64) -> Result<RMat> {
        let v = &sol.v;
        let xd = self.correction(v, &sol.w)?;
        let av = a_of(&self.a0, &self.bl, &self.br, v);
        let (x, relres) = match (&self.x0, &self.q) {
            (Some(x0), Some(q)) => {
                let x = x0 + &xd;
                let r = &av * &x + &x * av.transpose() + q;
                (x, r.norm() / q.norm().max(f64::MIN_POSITIVE))
            }
            _ => {
                let rhs = delta_rhs(&self.p, v);
                let r = &av * &xd + &xd * av.transpose() - &rhs;
                let rel = r.norm() / rhs.norm().max(f64::MIN_POSITIVE);
                (xd, rel)
            }
        };
        if !(relres <= residual_tol) {
            return Err(LyapError::AccuracyLoss { relres, tol: residual_tol });
        }
        Ok(x)
    }

    /// Assemble without the residual check (for projected use where the
    /// caller measures accuracy itself).
    pub fn assemble_unchecked(&self, sol: &SmwSolution) -> Result<RMat> {
        let xd = self.correction(&sol.v, &sol.w)?;
        Ok(match &self.x0 {
            Some(x0) => x0 + xd,
            None => xd,
        })
    }

    /// Precompute the pieces of `trace(E X(v))`.
    pub fn trace_cache(&self, e: Option<&RMat>) -> TraceCache {
        let q0 = &self.eig.vectors;
        let (etilde, f_x0, f_z) = match e {
            Some(e) => {
                let et = gemm(Op::N, &gemm(Op::T, q0, Op::N, &to_complex(e)), Op::N, q0);
                let fx0 = self.x0.as_ref().map_or(0.0, |x0| (e * x0).trace());
                let fz = self.z.iter().map(|z| (e * z).trace()).collect();
                (et, fx0, fz)
            }
            None => {
                let et = gemm(Op::T, q0, Op::N, q0);
                let fx0 = self.x0.as_ref().map_or(0.0, |x0| x0.trace());
                let fz = self.z.iter().map(|z| z.trace()).collect();
                (et, fx0, fz)
            }
        };
        TraceCache { etilde_t: etilde.transpose(), f_x0, f_z }
    }

    /// `trace(E X(v))` in `O(n^2 k)` without forming `X(v)`.
    pub fn trace(&self, sol: &SmwSolution, cache: &TraceCache) -> f64 {
        let h = self.hadamard_core(&sol.w);
        let wterm: C64 = cache.etilde_t.iter().zip(h.iter()).map(|(a, b)| a * b).sum();
        let zterm: f64 = sol.v.iter().zip(&cache.f_z).map(|(v, f)| v * f).sum();
        cache.f_x0 + zterm + wterm.re
    }

    /// The perturbation `E(v)` of `X(v)` caused by an error `[vec E1; vec E2]`
    /// in the SMW solution.
    pub fn error_matrix(&self, e1: &CMat, e2: &CMat) -> CMat {
        let mut x = CVec::zeros(2 * self.n * self.k);
        x.rows_mut(0, self.n * self.k).copy_from_slice(e1.as_slice());
        x.rows_mut(self.n * self.k, self.n * self.k).copy_from_slice(e2.as_slice());
        let h = self.hadamard_core(&x);
        gemm(Op::N, &gemm(Op::N, &self.eig.vectors, Op::N, &h), Op::T, &self.eig.vectors)
    }

    /// `||E(v)||_F <= ||Q0 E1 Bl^T + Bl E2 Q0^T||_F / (2 |alpha0|)` with
    /// `alpha0` the largest eigenvalue of `(A0 + A0^T)/2`.
    pub fn error_bound(&self, e1: &CMat, e2: &CMat) -> Result<f64> {
        let alpha0 = log_norm(&self.a0);
        if alpha0 >= 0.0 {
            return Err(LyapError::NotDissipative { alpha0 });
        }
        let q0 = &self.eig.vectors;
        let blc = to_complex(&self.bl);
        let f = q0 * e1 * blc.transpose() + &blc * e2 * q0.transpose();
        Ok(f.norm() / (2.0 * alpha0.abs()))
    }
}

/// Cached pieces of `f(X) = trace(E X)`.
#[derive(Clone, Debug)]
pub struct TraceCache {
    etilde_t: CMat,
    pub f_x0: f64,
    pub f_z: Vec<f64>,
}

pub(crate) fn a_of(a0: &RMat, bl: &RMat, br: &RMat, v: &[f64]) -> RMat {
    let mut bd = bl.clone();
    for (j, &vj) in v.iter().enumerate() {
        bd.column_mut(j).scale_mut(vj);
    }
    a0 - bd * br.transpose()
}

struct SystemOp<'a> {
    off: &'a SmwOffline,
    v: &'a [f64],
}

impl LinearOperator for SystemOp<'_> {
    fn dim(&self) -> usize {
        2 * self.off.n * self.off.k
    }
    fn apply(&self, x: &CVec) -> CVec {
        self.off.apply_system(self.v, x)
    }
}

/// Inverse of the block preconditioner for one parameter.
pub struct Preconditioner<'a> {
    off: &'a SmwOffline,
    /// Inverses of `D(v)^{-1} - G_s`, shared by both diagonal blocks.
    blocks: Vec<CMat>,
    lowrank: Option<LowRankState>,
}

struct LowRankState {
    s11inv_l1: CMat,
    kmat: CMat,
    cap: LuFactors<C64>,
}

impl<'a> Preconditioner<'a> {
    fn new(off: &'a SmwOffline, v: &[f64]) -> Result<Self> {
        let (n, k) = (off.n, off.k);
        let mut blocks = Vec::with_capacity(n);
        for s in 0..n {
            let mut m = -off.diag_blocks[s].clone();
            for t in 0..k {
                m[(t, t)] += C64::new(1.0 / v[t], 0.0);
            }
            let lu = LuFactors::new(&m).map_err(|_| LyapError::SingularPrecondBlock)?;
            blocks.push(lu.solve(&CMat::identity(k, k)));
        }
        let mut pc = Preconditioner { off, blocks, lowrank: None };
        if let Some((f12, f21)) = &off.precond {
            let r = f12.rank().min(f21.rank());
            if r > 0 {
                let s11inv_l1 = pc.s11_solve_mat(&f12.left);
                let s22inv_l2 = pc.s22_solve_mat(&f21.left);
                let kmat = f12.right.transpose() * s22inv_l2;
                let cap = CMat::identity(kmat.nrows(), kmat.nrows()) - &kmat * (f21.right.transpose() * &s11inv_l1);
                let cap = LuFactors::new(&cap).map_err(|_| LyapError::SingularPrecondBlock)?;
                pc.lowrank = Some(LowRankState { s11inv_l1, kmat, cap });
            }
        }
        Ok(pc)
    }

    fn s11_solve(&self, y: &[C64], out: &mut [C64]) {
        let (n, k) = (self.off.n, self.off.k);
        for s in 0..n {
            let g = &self.blocks[s];
            for t in 0..k {
                let mut acc = C64::new(0.0, 0.0);
                for p in 0..k {
                    acc += g[(t, p)] * y[p * n + s];
                }
                out[t * n + s] = acc;
            }
        }
    }

    fn s22_solve(&self, y: &[C64], out: &mut [C64]) {
        let (n, k) = (self.off.n, self.off.k);
        for s in 0..n {
            let g = &self.blocks[s];
            let ys = &y[s * k..(s + 1) * k];
            for t in 0..k {
                let mut acc = C64::new(0.0, 0.0);
                for p in 0..k {
                    acc += g[(t, p)] * ys[p];
                }
                out[s * k + t] = acc;
            }
        }
    }

    fn s11_solve_mat(&self, b: &CMat) -> CMat {
        let mut out = CMat::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = b.column(j).into_owned();
            let mut o = vec![C64::new(0.0, 0.0); b.nrows()];
            self.s11_solve(col.as_slice(), &mut o);
            out.column_mut(j).copy_from_slice(&o);
        }
        out
    }

    fn s22_solve_mat(&self, b: &CMat) -> CMat {
        let mut out = CMat::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = b.column(j).into_owned();
            let mut o = vec![C64::new(0.0, 0.0); b.nrows()];
            self.s22_solve(col.as_slice(), &mut o);
            out.column_mut(j).copy_from_slice(&o);
        }
        out
    }

    /// The preconditioner matrix itself (dense, for testing).
    pub fn to_dense(&self, v: &[f64]) -> CMat {
        let (n, k) = (self.off.n, self.off.k);
        let nk = n * k;
        let mut m = CMat::zeros(2 * nk, 2 * nk);
        for s in 0..n {
            for t in 0..k {
                for p in 0..k {
                    let g = -self.off.diag_blocks[s][(t, p)] + if t == p { C64::new(1.0 / v[t], 0.0) } else { C64::new(0.0, 0.0) };
                    m[(t * n + s, p * n + s)] = g;
                    m[(nk + s * k + t, nk + s * k + p)] = g;
                }
            }
        }
        if let (Some((f12, f21)), Some(_)) = (&self.off.precond, &self.lowrank) {
            m.view_mut((0, nk), (nk, nk)).copy_from(&f12.to_dense());
            m.view_mut((nk, 0), (nk, nk)).copy_from(&f21.to_dense());
        }
        m
    }
}

impl LinearOperator for Preconditioner<'_> {
    fn dim(&self) -> usize {
        2 * self.off.n * self.off.k
    }

    fn apply(&self, y: &CVec) -> CVec {
        let nk = self.off.n * self.off.k;
        let y1 = &y.as_slice()[..nk];
        let y2 = &y.as_slice()[nk..];
        let mut out = CVec::zeros(2 * nk);
        match (&self.lowrank, &self.off.precond) {
            (Some(lr), Some((f12, f21))) => {
                let mut t = vec![C64::new(0.0, 0.0); nk];
                self.s22_solve(y2, &mut t);
                let tv = CVec::from_vec(t);
                let y1p = CVec::from_column_slice(y1) - gemv(Op::N, &f12.left, &gemv(Op::T, &f12.right, &tv));
                let mut u = vec![C64::new(0.0, 0.0); nk];
                self.s11_solve(y1p.as_slice(), &mut u);
                let u = CVec::from_vec(u);
                let z = lr.cap.solve_vec(&gemv(Op::N, &lr.kmat, &gemv(Op::T, &f21.right, &u)));
                let x1 = u + gemv(Op::N, &lr.s11inv_l1, &z);
                let y2p = CVec::from_column_slice(y2) - gemv(Op::N, &f21.left, &gemv(Op::T, &f21.right, &x1));
                let mut x2 = vec![C64::new(0.0, 0.0); nk];
                self.s22_solve(y2p.as_slice(), &mut x2);
                out.rows_mut(0, nk).copy_from(&x1);
                out.rows_mut(nk, nk).copy_from_slice(&x2);
            }
            _ => {
                let (a, b) = out.as_mut_slice().split_at_mut(nk);
                self.s11_solve(y1, a);
                self.s22_solve(y2, b);
            }
        }
        out
    }
}

/// Parameters of the backward-error and norm identities:
/// `||A(v)||_F^2 = ||A0||_F^2 + v^T ((Bl^T Bl) o (Br^T Br)) v - 2 a^T v`
/// with `a = diag(Bl^T A0 Br)`.
#[derive(Clone, Debug)]
pub struct NormCache {
    pub norm_a0_f: f64,
    pub had: RMat,
    pub a: RVec,
}

impl NormCache {
    pub fn new(a0: &RMat, bl: &RMat, br: &RMat) -> Self {
        let had = (bl.transpose() * bl).component_mul(&(br.transpose() * br));
        let a = (bl.transpose() * a0 * br).diagonal();
        NormCache { norm_a0_f: a0.norm(), had, a }
    }

    pub fn norm_a_of(&self, v: &[f64]) -> f64 {
        let vv = RVec::from_column_slice(v);
        let sq = self.norm_a0_f * self.norm_a0_f + vv.dot(&(&self.had * &vv)) - 2.0 * self.a.dot(&vv);
        sq.max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank_one() -> ParamLyapProblem {
        let a0 = RMat::from_diagonal(&RVec::from_vec(vec![-1.0, -2.0]));
        let e1 = RMat::from_column_slice(2, 1, &[1.0, 0.0]);
        ParamLyapProblem::new(a0, e1.clone(), e1, RMat::identity(2, 2)).unwrap()
    }

    #[test]
    fn rank_one_hand_computed() {
        let pb = rank_one();
        let off = SmwOffline::new(&pb, 0).unwrap();
        let x0 = off.x0().unwrap();
        assert!((x0 - RMat::from_diagonal(&RVec::from_vec(vec![0.5, 0.25]))).norm() < 1e-14);
        assert!((off.p() - RMat::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.0])).norm() < 1e-14);
        assert!((&off.z()[0] - RMat::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, 0.0])).norm() < 1e-14);
        let (sol, _) = off.solve(&[1.0], None, &SmwOptions::default()).unwrap();
        let x = off.assemble(&sol, 1e-12).unwrap();
        assert!((&x - RMat::from_diagonal(&RVec::from_vec(vec![0.25, 0.25]))).norm() < 1e-13);
        let tc = off.trace_cache(None);
        assert!((off.trace(&sol, &tc) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn zero_parameter_rejected() {
        let off = SmwOffline::new(&rank_one(), 0).unwrap();
        assert_eq!(off.solve(&[0.0], None, &SmwOptions::default()).unwrap_err(), LyapError::ZeroParameter { index: 0 });
    }

    #[test]
    fn norm_identity_nonsymmetric_factors() {
        let a0 = RMat::from_row_slice(3, 3, &[-2.0, 1.0, 0.5, 0.0, -3.0, 1.0, 0.3, 0.2, -1.0]);
        let bl = RMat::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, -1.0]);
        let br = RMat::from_row_slice(3, 2, &[0.5, 1.0, 0.0, 3.0, 1.0, 0.0]);
        let nc = NormCache::new(&a0, &bl, &br);
        let v = [0.7, -1.3];
        let direct = a_of(&a0, &bl, &br, &v).norm();
        assert!((nc.norm_a_of(&v) - direct).abs() < 1e-13 * direct);
    }
}
