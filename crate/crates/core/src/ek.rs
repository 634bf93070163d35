//! Extended Krylov projection shared by all parameters.
//!
//! One basis of `EK_m(A0, P) = span[P, A0^{-1}P, A0 P, A0^{-2} P, ...]` is
//! grown on demand. For each parameter the projected equation
//!
//! ```text
//! (T_m - Blm D Brm^T) Y + Y (T_m - Blm D Brm^T)^T = [G; 0] (J (x) D) [G; 0]^T
//! ```
//!
//! is solved with the SMW solver, and the backward error decides whether the
//! basis must grow.
//!
//! `A0 V` is carried along with `V`: for columns coming from an `A0^{-1}`
//! step the image is known exactly, so only the columns coming from an `A0`
//! step cost a matrix-vector product.

use std::time::Instant;

use crate::dense::{orth_against, solve_lyap_dense, LuFactors};
use crate::gcrodr::RecycleSpace;
use crate::problem::{delta_rhs, rhs_factor};
use crate::smw::{NormCache, SmwOffline, SmwOptions};
use crate::{LyapError, ParamLyapProblem, RMat, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Direct,
    Inverse,
}

// Below this relative norm after orthogonalization the image of a new column
// is recomputed with a product instead of the recurrence.
const WEAK_COLUMN: f64 = 1e-6;

/// Orthonormal basis of the extended Krylov space with the images `A0 V`.
#[derive(Clone, Debug)]
pub struct EkBasis {
    a0: RMat,
    lu: LuFactors<f64>,
    bl: RMat,
    v: RMat,
    av: RMat,
    kinds: Vec<Kind>,
    /// First column of every block; the last block is the lookahead block.
    starts: Vec<usize>,
    t: RMat,
    vt_bl: RMat,
    vt_br: RMat,
    br: RMat,
    g: RMat,
    saturated: bool,
    defl_tol: f64,
    verify: bool,
    pub matvecs: usize,
    pub solves: usize,
}

impl EkBasis {
    /// First block: an orthonormal basis of `[P, A0^{-1} P]` and `G` with
    /// `P = V_1 G`.
    pub fn init(a0: &RMat, lu: LuFactors<f64>, p: &RMat, bl: &RMat, br: &RMat, defl_tol: f64, verify: bool) -> Result<Self> {
        let n = a0.nrows();
        let w2 = p.ncols();
        if p.nrows() != n || lu.n() != n {
            return Err(LyapError::DimensionMismatch(format!("A0 is {n}x{n}, P is {:?}", p.shape())));
        }
        let ainv_p = lu.solve(p);
        let a_p = a0 * p;
        let mut w = RMat::zeros(n, 2 * w2);
        w.columns_mut(0, w2).copy_from(p);
        w.columns_mut(w2, w2).copy_from(&ainv_p);
        let mut aw = RMat::zeros(n, 2 * w2);
        aw.columns_mut(0, w2).copy_from(&a_p);
        aw.columns_mut(w2, w2).copy_from(p);
        let kinds_w: Vec<Kind> = (0..2 * w2).map(|j| if j < w2 { Kind::Direct } else { Kind::Inverse }).collect();

        let mut basis = EkBasis {
            a0: a0.clone(),
            lu,
            bl: bl.clone(),
            v: RMat::zeros(n, 0),
            av: RMat::zeros(n, 0),
            kinds: vec![],
            starts: vec![],
            t: RMat::zeros(0, 0),
            vt_bl: RMat::zeros(0, bl.ncols()),
            vt_br: RMat::zeros(0, br.ncols()),
            br: br.clone(),
            g: RMat::zeros(0, w2),
            saturated: false,
            defl_tol,
            verify,
            matvecs: w2,
            solves: w2,
        };
        let (added, rmat, scales) = basis.append_block(&w, &aw, &kinds_w)?;
        if added == 0 {
            return Err(LyapError::DimensionMismatch("initial block P is zero".into()));
        }
        // P = Q R[:, 0..w2] diag(scales)
        let mut g = rmat.columns(0, w2).into_owned();
        for j in 0..w2 {
            g.column_mut(j).scale_mut(scales[j]);
        }
        basis.g = g;
        Ok(basis)
    }

    /// Orthogonalize `w` against the basis, append the new columns and
    /// their images. Returns the number of columns added, the `R` factor of
    /// the column-normalized block, and the normalization scales.
    fn append_block(&mut self, w: &RMat, aw: &RMat, kinds_w: &[Kind]) -> Result<(usize, RMat, Vec<f64>)> {
        let n = self.a0.nrows();
        let mut wn = w.clone();
        let mut awn = aw.clone();
        let mut scales = vec![0.0; w.ncols()];
        for j in 0..w.ncols() {
            let s = w.column(j).norm();
            scales[j] = s;
            if s > 0.0 {
                wn.column_mut(j).unscale_mut(s);
                awn.column_mut(j).unscale_mut(s);
            }
        }
        let o = orth_against(&self.v, &wn, self.defl_tol);
        let added = o.kept.len();
        if added == 0 {
            return Ok((0, o.r, scales));
        }
        // images: A q_i = (A w_j - AV c_j - sum_{l<i} r_lj A q_l) / r_ij
        let mut aq = RMat::zeros(n, added);
        for (i, &j) in o.kept.iter().enumerate() {
            let rij = o.r[(i, j)];
            if rij < WEAK_COLUMN {
                aq.set_column(i, &(&self.a0 * o.q.column(i)));
                self.matvecs += 1;
                continue;
            }
            let mut x = awn.column(j).into_owned();
            if self.v.ncols() > 0 {
                x.gemv(-1.0, &self.av, &o.coeffs.column(j), 1.0);
            }
            for l in 0..i {
                x.axpy(-o.r[(l, j)], &aq.column(l), 1.0);
            }
            aq.set_column(i, &(x / rij));
        }

        let d_old = self.v.ncols();
        let d_new = d_old + added;
        let mut v = RMat::zeros(n, d_new);
        v.columns_mut(0, d_old).copy_from(&self.v);
        v.columns_mut(d_old, added).copy_from(&o.q);
        let mut av = RMat::zeros(n, d_new);
        av.columns_mut(0, d_old).copy_from(&self.av);
        av.columns_mut(d_old, added).copy_from(&aq);

        let mut t = RMat::zeros(d_new, d_new);
        t.view_mut((0, 0), (d_old, d_old)).copy_from(&self.t);
        let upper = self.v.transpose() * &aq;
        t.view_mut((0, d_old), (d_old, added)).copy_from(&upper);
        let lower = o.q.transpose() * &av;
        t.view_mut((d_old, 0), (added, d_new)).copy_from(&lower);

        let mut vt_bl = RMat::zeros(d_new, self.bl.ncols());
        vt_bl.rows_mut(0, d_old).copy_from(&self.vt_bl);
        vt_bl.rows_mut(d_old, added).copy_from(&(o.q.transpose() * &self.bl));
        let mut vt_br = RMat::zeros(d_new, self.br.ncols());
        vt_br.rows_mut(0, d_old).copy_from(&self.vt_br);
        vt_br.rows_mut(d_old, added).copy_from(&(o.q.transpose() * &self.br));

        self.starts.push(d_old);
        for &j in &o.kept {
            self.kinds.push(kinds_w[j]);
        }
        self.v = v;
        self.av = av;
        self.t = t;
        self.vt_bl = vt_bl;
        self.vt_br = vt_br;

        if self.verify {
            let dev = self.t_deviation();
            if dev > 1e-10 {
                return Err(LyapError::AccuracyLoss { relres: dev, tol: 1e-10 });
            }
        }
        Ok((added, o.r, scales))
    }

    /// Grow the space by one block `[A0 V_dir, A0^{-1} V_inv]` built from
    /// the newest block.
    pub fn expand(&mut self) -> Result<()> {
        if self.saturated {
            return Err(LyapError::SaturatedSpace);
        }
        let n = self.a0.nrows();
        let last = *self.starts.last().expect("initialized");
        let d = self.v.ncols();
        let dir: Vec<usize> = (last..d).filter(|&j| self.kinds[j] == Kind::Direct).collect();
        let inv: Vec<usize> = (last..d).filter(|&j| self.kinds[j] == Kind::Inverse).collect();
        let nd = dir.len();
        let ni = inv.len();
        let mut w = RMat::zeros(n, nd + ni);
        let mut aw = RMat::zeros(n, nd + ni);
        let mut kinds = Vec::with_capacity(nd + ni);
        for (c, &j) in dir.iter().enumerate() {
            let x = self.av.column(j).into_owned();
            aw.set_column(c, &(&self.a0 * &x));
            w.set_column(c, &x);
            kinds.push(Kind::Direct);
        }
        self.matvecs += nd;
        if ni > 0 {
            let src = self.v.select_columns(&inv);
            let sol = self.lu.solve(&src);
            w.columns_mut(nd, ni).copy_from(&sol);
            aw.columns_mut(nd, ni).copy_from(&src);
            kinds.extend(std::iter::repeat_n(Kind::Inverse, ni));
            self.solves += ni;
        }
        let (added, _, _) = self.append_block(&w, &aw, &kinds)?;
        if added == 0 {
            self.saturated = true;
            return Err(LyapError::SaturatedSpace);
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a0.nrows()
    }
    /// Total number of stored columns, lookahead block included.
    pub fn total_dim(&self) -> usize {
        self.v.ncols()
    }
    pub fn blocks(&self) -> usize {
        self.starts.len()
    }
    pub fn is_saturated(&self) -> bool {
        self.saturated
    }
    /// Number of blocks used by the projection.
    pub fn m(&self) -> usize {
        if self.saturated {
            self.starts.len()
        } else {
            self.starts.len() - 1
        }
    }
    /// Dimension of the projection space `V_m`.
    pub fn dim(&self) -> usize {
        if self.saturated || self.starts.len() < 2 {
            if self.saturated {
                self.v.ncols()
            } else {
                0
            }
        } else {
            self.starts[self.starts.len() - 1]
        }
    }
    pub fn v(&self) -> RMat {
        self.v.columns(0, self.dim()).into_owned()
    }
    pub fn v_all(&self) -> &RMat {
        &self.v
    }
    pub fn kinds(&self) -> &[Kind] {
        &self.kinds
    }
    pub fn g(&self) -> &RMat {
        &self.g
    }
    /// `T_m = V_m^T A0 V_m`.
    pub fn t_m(&self) -> RMat {
        let d = self.dim();
        self.t.view((0, 0), (d, d)).into_owned()
    }
    /// `E_m^T T_m` underline, the coupling of the lookahead block to `V_m`.
    pub fn t_under(&self) -> RMat {
        let d = self.dim();
        let total = self.v.ncols();
        self.t.view((d, 0), (total - d, d)).into_owned()
    }
    pub fn bl_m(&self) -> RMat {
        self.vt_bl.rows(0, self.dim()).into_owned()
    }
    pub fn br_m(&self) -> RMat {
        self.vt_br.rows(0, self.dim()).into_owned()
    }
    /// `[G; 0]`, the projected right-hand side factor.
    pub fn p_m(&self) -> RMat {
        let d = self.dim();
        let mut p = RMat::zeros(d, self.g.ncols());
        let r = self.g.nrows().min(d);
        p.rows_mut(0, r).copy_from(&self.g.rows(0, r));
        p
    }

    /// Largest entrywise deviation between the stored `V^T A0 V` and the one
    /// computed with explicit products, relative to `||A0||_F`.
    pub fn t_deviation(&self) -> f64 {
        let direct = self.v.transpose() * (&self.a0 * &self.v);
        (&direct - &self.t).amax() / self.a0.norm().max(f64::MIN_POSITIVE)
    }

    /// `||A0 V_m - V_m T_m - V_{m+1} T_under||_F / ||A0||_F`.
    pub fn arnoldi_residual(&self) -> f64 {
        let d = self.dim();
        let vm = self.v.columns(0, d);
        let mut r = &self.a0 * vm - vm * self.t_m();
        let total = self.v.ncols();
        if total > d {
            r -= self.v.columns(d, total - d) * self.t_under();
        }
        r.norm() / self.a0.norm()
    }

    pub fn orthogonality_loss(&self) -> f64 {
        let d = self.v.ncols();
        (self.v.transpose() * &self.v - RMat::identity(d, d)).amax()
    }
}

#[derive(Clone, Debug)]
pub struct EkOptions {
    /// Backward error target.
    pub eps: f64,
    /// Maximum number of blocks in the projection space.
    pub m_max: usize,
    pub defl_tol: f64,
    pub verify_t: bool,
    pub smw: SmwOptions,
    /// Residual accepted for the projected SMW solution before falling back
    /// to a dense projected solve.
    pub projected_tol: f64,
}

impl Default for EkOptions {
    fn default() -> Self {
        EkOptions { eps: 1e-8, m_max: 120, defl_tol: 1e-12, verify_t: false, smw: SmwOptions::default(), projected_tol: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EkStatus {
    Accepted,
    /// The space saturated or the dimension reached `n` without meeting the
    /// target; the value comes from the dense solver.
    DenseFallback,
    Unconverged,
}

#[derive(Clone, Debug)]
pub struct EkRecord {
    pub v: Vec<f64>,
    pub f_value: Option<f64>,
    pub backward_error: f64,
    pub basis_dim: usize,
    /// Expansions performed while this parameter was being processed.
    pub expansions: usize,
    pub inner_iters: usize,
    pub wall_ms: f64,
    pub status: EkStatus,
}

#[derive(Clone, Debug, Default)]
pub struct SweepReport {
    pub records: Vec<EkRecord>,
    pub total_expansions: usize,
    pub final_dim: usize,
}

struct Projected {
    dim: usize,
    off: SmwOffline,
    recycle: Option<RecycleSpace>,
}

/// Solver state for a stream of parameters: a fixed list, or an
/// optimizer's iterates one at a time.
pub struct EkSolver {
    problem: ParamLyapProblem,
    basis: EkBasis,
    opts: EkOptions,
    norm_cache: NormCache,
    e: Option<RMat>,
    f_x0: f64,
    projected: Option<Projected>,
    pub total_expansions: usize,
}

/// Solution of one projected equation.
#[derive(Clone, Debug)]
pub struct ProjectedSolution {
    pub y: RMat,
    pub inner_iters: usize,
}

impl EkSolver {
    pub fn new(problem: &ParamLyapProblem, e: Option<RMat>, opts: EkOptions) -> Result<Self> {
        let x0 = problem.seed_solution()?;
        let p = rhs_factor(&x0, &problem.bl, &problem.br);
        let lu = LuFactors::new(&problem.a0)?;
        let mut basis = EkBasis::init(&problem.a0, lu, &p, &problem.bl, &problem.br, opts.defl_tol, opts.verify_t)?;
        match basis.expand() {
            Ok(()) | Err(LyapError::SaturatedSpace) => {}
            Err(e) => return Err(e),
        }
        let f_x0 = match &e {
            Some(e) => (e * &x0).trace(),
            None => x0.trace(),
        };
        let norm_cache = NormCache::new(&problem.a0, &problem.bl, &problem.br);
        let mut problem = problem.clone();
        problem.x0 = Some(x0);
        Ok(EkSolver { problem, basis, opts, norm_cache, e, f_x0, projected: None, total_expansions: 0 })
    }

    pub fn basis(&self) -> &EkBasis {
        &self.basis
    }

    pub fn f_x0(&self) -> f64 {
        self.f_x0
    }

    fn projected(&mut self) -> Result<&mut Projected> {
        let d = self.basis.dim();
        if self.projected.as_ref().map(|p| p.dim) != Some(d) {
            let pbar = self.opts.smw.pbar.min(d * self.problem.k());
            let off = SmwOffline::from_parts(&self.basis.t_m(), &self.basis.bl_m(), &self.basis.br_m(), &self.basis.p_m(), pbar)
                .map_err(|_| LyapError::SingularProjectedEquation)?;
            self.projected = Some(Projected { dim: d, off, recycle: None });
        }
        Ok(self.projected.as_mut().expect("just set"))
    }

    /// Solve the projected equation for `v` in the current space.
    pub fn solve_projected(&mut self, v: &[f64]) -> Result<ProjectedSolution> {
        self.problem.check_params(v)?;
        let smw_opts = self.opts.smw.clone();
        let tol = self.opts.projected_tol;
        let (tm, blm, brm, pm) = (self.basis.t_m(), self.basis.bl_m(), self.basis.br_m(), self.basis.p_m());
        let proj = self.projected()?;
        let rec = proj.recycle.take();
        let attempt = proj.off.solve(v, rec, &smw_opts);
        let (y, iters) = match attempt {
            Ok((sol, next)) => {
                proj.recycle = next;
                let y = proj.off.assemble_unchecked(&sol)?;
                (Some(y), sol.stats.iterations)
            }
            Err(LyapError::ZeroParameter { index }) => return Err(LyapError::ZeroParameter { index }),
            Err(_) => (None, 0),
        };
        let am = crate::smw::a_of(&tm, &blm, &brm, v);
        let rhs = delta_rhs(&pm, v);
        let residual = |y: &RMat| (&am * y + y * am.transpose() - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
        if let Some(y) = y {
            if residual(&y) <= tol {
                return Ok(ProjectedSolution { y, inner_iters: iters });
            }
            log::debug!("projected SMW residual {:.3e} above {tol:.1e}, using dense projected solve", residual(&y));
        }
        let y = solve_lyap_dense(&am, &(-&rhs)).map_err(|_| LyapError::SingularProjectedEquation)?;
        Ok(ProjectedSolution { y, inner_iters: iters })
    }

    /// Backward error of `Y` as an approximate solution of the correction
    /// equation.
    pub fn backward_error(&self, y: &RMat, v: &[f64]) -> f64 {
        backward_error(&self.basis, &self.norm_cache, y, v)
    }

    /// `trace(E V Y V^T)`, or `trace(Y)` without `E`.
    pub fn trace(&self, y: &RMat) -> f64 {
        match &self.e {
            None => y.trace(),
            Some(e) => {
                let vm = self.basis.v();
                (vm.transpose() * e * vm).component_mul(&y.transpose()).sum()
            }
        }
    }

    /// Process one parameter, expanding the space as needed.
    pub fn evaluate(&mut self, v: &[f64]) -> EkRecord {
        let start = Instant::now();
        let mut expansions = 0;
        let mut singular = 0;
        let mut inner = 0;
        let mut last_be = f64::INFINITY;
        loop {
            match self.solve_projected(v) {
                Ok(ps) => {
                    inner += ps.inner_iters;
                    let be = self.backward_error(&ps.y, v);
                    last_be = be;
                    if be <= self.opts.eps {
                        let f = self.f_x0 + self.trace(&ps.y);
                        return self.record(v, Some(f), be, expansions, inner, start, EkStatus::Accepted);
                    }
                }
                Err(LyapError::ZeroParameter { .. }) => {
                    return self.record(v, None, f64::NAN, expansions, inner, start, EkStatus::Unconverged);
                }
                Err(_) => {
                    singular += 1;
                    if singular >= 2 {
                        return self.record(v, None, f64::NAN, expansions, inner, start, EkStatus::Unconverged);
                    }
                }
            }
            if self.basis.is_saturated() {
                return self.dense_fallback(v, expansions, inner, start);
            }
            if self.basis.m() >= self.opts.m_max {
                return self.record(v, None, last_be, expansions, inner, start, EkStatus::Unconverged);
            }
            match self.basis.expand() {
                Ok(()) | Err(LyapError::SaturatedSpace) => {
                    expansions += 1;
                    self.total_expansions += 1;
                }
                Err(e) => {
                    log::warn!("basis expansion failed: {e}");
                    return self.dense_fallback(v, expansions, inner, start);
                }
            }
        }
    }

    fn dense_fallback(&mut self, v: &[f64], expansions: usize, inner: usize, start: Instant) -> EkRecord {
        match self.problem.solve_dense(v) {
            Ok(x) => {
                let f = match &self.e {
                    Some(e) => (e * &x).trace(),
                    None => x.trace(),
                };
                let av = self.problem.a_of(v);
                let r = &av * &x + &x * av.transpose() + &self.problem.q;
                let be = r.norm() / (2.0 * av.norm() * x.norm() + self.problem.q.norm());
                self.record(v, Some(f), be, expansions, inner, start, EkStatus::DenseFallback)
            }
            Err(_) => self.record(v, None, f64::NAN, expansions, inner, start, EkStatus::Unconverged),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(&self, v: &[f64], f: Option<f64>, be: f64, expansions: usize, inner: usize, start: Instant, status: EkStatus) -> EkRecord {
        EkRecord {
            v: v.to_vec(),
            f_value: f,
            backward_error: be,
            basis_dim: self.basis.dim(),
            expansions,
            inner_iters: inner,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            status,
        }
    }
}

/// Backward error from projected quantities only:
/// `sqrt(2) ||T_under Y||_F / (2 ||A(v)||_F ||Y||_F + ||G (J (x) D) G^T||_F)`.
pub fn backward_error(basis: &EkBasis, cache: &NormCache, y: &RMat, v: &[f64]) -> f64 {
    let num = if basis.is_saturated() { 0.0 } else { std::f64::consts::SQRT_2 * (basis.t_under() * y).norm() };
    let g = basis.g();
    let rhs = delta_rhs(g, v).norm();
    let den = 2.0 * cache.norm_a_of(v) * y.norm() + rhs;
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Process a fixed list of parameters in order with one shared basis.
pub fn ek_sweep(problem: &ParamLyapProblem, vset: &[Vec<f64>], e: Option<RMat>, opts: EkOptions) -> Result<SweepReport> {
    let mut solver = EkSolver::new(problem, e, opts)?;
    let records: Vec<EkRecord> = vset.iter().map(|v| solver.evaluate(v)).collect();
    Ok(SweepReport { records, total_expansions: solver.total_expansions, final_dim: solver.basis.dim() })
}
