//! GCRO-DR: restarted GMRES with deflated restarting and subspace
//! recycling across a sequence of linear systems (Parks et al., 2006).
//!
//! Complex arithmetic throughout; preconditioning is applied from the
//! right, so the Krylov operator is `A M^{-1}` and the recycle space lives
//! in the preconditioned coordinates. With `s = 0` every cycle is a plain
//! GMRES(m) cycle.

use crate::dense::{eig_general, LuFactors};
use crate::{CMat, CVec, LyapError, C64};

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &CVec) -> CVec;
}

/// Wraps a closure as an operator of the given dimension.
pub struct FnOperator<F: Fn(&CVec) -> CVec> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&CVec) -> CVec> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &CVec) -> CVec {
        (self.f)(x)
    }
}

impl LinearOperator for CMat {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &CVec) -> CVec {
        self * x
    }
}

#[derive(Clone, Debug)]
pub struct GcroDrOptions {
    /// Relative residual target `||b - A x|| / ||b||`.
    pub tol: f64,
    /// Total number of Arnoldi steps allowed.
    pub maxit: usize,
    /// Restart length `m` (recycle columns included).
    pub restart: usize,
    /// Recycle dimension `s`; zero gives GMRES(m).
    pub recycle: usize,
}

impl Default for GcroDrOptions {
    fn default() -> Self {
        GcroDrOptions { tol: 1e-10, maxit: 300, restart: 80, recycle: 10 }
    }
}

/// `U` and `C = A M^{-1} U` with orthonormal `C`.
#[derive(Clone, Debug)]
pub struct RecycleSpace {
    pub u: CMat,
    pub c: CMat,
}

impl RecycleSpace {
    pub fn dim(&self) -> usize {
        self.u.ncols()
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub cycles: usize,
    pub matvecs: usize,
    /// True relative residual of the returned iterate.
    pub relres: f64,
    /// Least-squares residual estimate after every Arnoldi step.
    pub history: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub x: CVec,
    pub recycle: Option<RecycleSpace>,
    pub stats: SolveStats,
}

/// A failed solve still carries its best iterate.
#[derive(Clone, Debug)]
pub struct GcroDrFailure {
    pub error: LyapError,
    pub best: SolveOutput,
}

impl From<GcroDrFailure> for LyapError {
    fn from(f: GcroDrFailure) -> Self {
        f.error
    }
}

const REORTH_TRIGGER: f64 = 1e-8;

/// Solve `A x = b` with optional right preconditioner `M` (given as the
/// action of `M^{-1}`) and optional recycle space from a previous system.
pub fn gcrodr_solve(
    a: &dyn LinearOperator,
    minv: Option<&dyn LinearOperator>,
    b: &CVec,
    x0: Option<&CVec>,
    opts: &GcroDrOptions,
    recycle: Option<RecycleSpace>,
) -> Result<SolveOutput, Box<GcroDrFailure>> {
    let n = a.dim();
    let mut stats = SolveStats::default();
    let fail = |error: LyapError, x: CVec, recycle: Option<RecycleSpace>, stats: SolveStats| {
        Box::new(GcroDrFailure { error, best: SolveOutput { x, recycle, stats } })
    };
    if b.len() != n {
        return Err(fail(LyapError::DimensionMismatch(format!("operator dim {n}, rhs {}", b.len())), CVec::zeros(n), None, stats));
    }
    if opts.recycle >= opts.restart {
        return Err(fail(LyapError::Config(format!("recycle dimension {} must be below restart {}", opts.recycle, opts.restart)), CVec::zeros(n), None, stats));
    }
    let precond = |u: &CVec| -> CVec {
        match minv {
            Some(p) => p.apply(u),
            None => u.clone(),
        }
    };
    let op = |u: &CVec| -> CVec { a.apply(&precond(u)) };

    let mut x = x0.cloned().unwrap_or_else(|| CVec::zeros(n));
    let bnorm = b.norm();
    if bnorm == 0.0 {
        stats.converged = true;
        return Ok(SolveOutput { x: CVec::zeros(n), recycle, stats });
    }
    let mut r = if x0.is_some() {
        stats.matvecs += 1;
        b - a.apply(&x)
    } else {
        b.clone()
    };

    let s = opts.recycle;
    let mut space: Option<(CMat, CMat)> = None;
    if let Some(rs) = recycle.filter(|rs| s > 0 && rs.dim() > 0 && rs.u.nrows() == n) {
        let mut ct = CMat::zeros(n, rs.dim());
        for j in 0..rs.dim() {
            ct.set_column(j, &op(&rs.u.column(j).into_owned()));
            stats.matvecs += 1;
        }
        let (q, rr, kept) = mgs_qr(&ct, 1e-12);
        if !kept.is_empty() {
            let u = rs.u.select_columns(&kept);
            let rinv = upper_inverse(&rr);
            let u = u * rinv;
            let cr = q.adjoint() * &r;
            x += precond(&(&u * &cr));
            r -= &q * &cr;
            space = Some((u, q));
        }
    }

    let mut relres = r.norm() / bnorm;
    stats.relres = relres;
    if relres <= opts.tol {
        stats.converged = true;
        let recycle = space.map(|(u, c)| RecycleSpace { u, c });
        return Ok(SolveOutput { x, recycle, stats });
    }

    loop {
        let k = space.as_ref().map_or(0, |(u, _)| u.ncols());
        let steps = opts.restart - k;
        let budget = opts.maxit - stats.iterations;
        let steps = steps.min(budget);
        if steps == 0 {
            let recycle = space.map(|(u, c)| RecycleSpace { u, c });
            return Err(fail(LyapError::MaxIterationsExceeded { iterations: stats.iterations, relres }, x, recycle, stats));
        }

        // scaled recycle basis: A M^{-1} (U D) = C D
        let (ut, c, dk) = match &space {
            Some((u, c)) => {
                let mut ut = u.clone();
                let mut d = Vec::with_capacity(k);
                for j in 0..k {
                    let nj = ut.column(j).norm();
                    ut.column_mut(j).unscale_mut(nj);
                    d.push(1.0 / nj);
                }
                (ut, c.clone(), d)
            }
            None => (CMat::zeros(n, 0), CMat::zeros(n, 0), vec![]),
        };

        let c0 = c.adjoint() * &r;
        let mut r_perp = r.clone();
        if k > 0 {
            r_perp -= &c * &c0;
        }
        let beta = r_perp.norm();

        let cyc = arnoldi_cycle(&op, &c, &dk, &c0, r_perp, beta, steps, opts.tol * bnorm, bnorm, &mut stats);
        let j = cyc.steps;

        // x += M^{-1} (Vhat y), Vhat = [U D, V_j]
        let mut corr = CVec::zeros(n);
        for i in 0..k {
            corr.axpy(cyc.y[i], &ut.column(i), C64::new(1.0, 0.0));
        }
        for i in 0..j {
            corr.axpy(cyc.y[k + i], &cyc.v[i], C64::new(1.0, 0.0));
        }
        x += precond(&corr);
        r = b - a.apply(&x);
        stats.matvecs += 1;
        stats.cycles += 1;
        let prev = relres;
        relres = r.norm() / bnorm;
        stats.relres = relres;

        if s > 0 {
            if let Some(new_space) = update_recycle(&cyc, &ut, &c, s) {
                space = Some(new_space);
            }
        }

        if relres <= opts.tol {
            stats.converged = true;
            let recycle = space.map(|(u, c)| RecycleSpace { u, c });
            return Ok(SolveOutput { x, recycle, stats });
        }
        if cyc.breakdown && relres >= prev * (1.0 - 1e-12) {
            let recycle = space.map(|(u, c)| RecycleSpace { u, c });
            return Err(fail(LyapError::BreakdownDetected { relres }, x, recycle, stats));
        }
        if stats.iterations >= opts.maxit {
            let recycle = space.map(|(u, c)| RecycleSpace { u, c });
            return Err(fail(LyapError::MaxIterationsExceeded { iterations: stats.iterations, relres }, x, recycle, stats));
        }
    }
}

struct Cycle {
    /// Arnoldi vectors `v_1 .. v_{j+1}` (the last may be zero after breakdown).
    v: Vec<CVec>,
    /// `G` bar, `(k + j + 1) x (k + j)`, before rotations.
    gbar: CMat,
    /// Least-squares coefficients for `[U D, V_j]`.
    y: Vec<C64>,
    steps: usize,
    breakdown: bool,
}

#[allow(clippy::too_many_arguments)]
fn arnoldi_cycle(
    op: &dyn Fn(&CVec) -> CVec,
    c: &CMat,
    dk: &[f64],
    c0: &CVec,
    r_perp: CVec,
    beta: f64,
    steps: usize,
    abs_tol: f64,
    bnorm: f64,
    stats: &mut SolveStats,
) -> Cycle {
    let k = dk.len();
    let dim = k + steps;
    let mut gbar = CMat::zeros(dim + 1, dim);
    for i in 0..k {
        gbar[(i, i)] = C64::new(dk[i], 0.0);
    }
    // rotated copy used for the incremental least-squares solve
    let mut rot = gbar.clone();
    let mut g = CVec::zeros(dim + 1);
    for i in 0..k {
        g[i] = c0[i];
    }
    g[k] = C64::new(beta, 0.0);
    let mut givens: Vec<(f64, C64)> = Vec::with_capacity(steps);

    let mut v: Vec<CVec> = Vec::with_capacity(steps + 1);
    let mut breakdown = false;
    let mut j = 0;
    if beta == 0.0 {
        v.push(CVec::zeros(r_perp.len()));
        breakdown = true;
    } else {
        v.push(r_perp * C64::new(1.0 / beta, 0.0));
    }

    while j < steps && !breakdown {
        let mut w = op(&v[j]);
        stats.matvecs += 1;
        let col = k + j;
        for i in 0..k {
            let h = c.column(i).dotc(&w);
            rot[(i, col)] = h;
            gbar[(i, col)] = h;
            w.axpy(-h, &c.column(i), C64::new(1.0, 0.0));
        }
        let mut h: Vec<C64> = Vec::with_capacity(j + 2);
        for vi in v.iter().take(j + 1) {
            let hi = vi.dotc(&w);
            w.axpy(-hi, vi, C64::new(1.0, 0.0));
            h.push(hi);
        }
        let wn = w.norm();
        let mut loss = 0.0f64;
        let mut extra: Vec<C64> = Vec::with_capacity(j + 1);
        for vi in v.iter().take(j + 1) {
            let e = vi.dotc(&w);
            loss = loss.max(e.norm());
            extra.push(e);
        }
        if wn > 0.0 && loss > REORTH_TRIGGER * wn {
            for (i, vi) in v.iter().take(j + 1).enumerate() {
                w.axpy(-extra[i], vi, C64::new(1.0, 0.0));
                h[i] += extra[i];
            }
        }
        let hnext = w.norm();
        for (i, hi) in h.iter().enumerate() {
            gbar[(k + i, col)] = *hi;
            rot[(k + i, col)] = *hi;
        }
        gbar[(k + j + 1, col)] = C64::new(hnext, 0.0);
        rot[(k + j + 1, col)] = C64::new(hnext, 0.0);

        for (i, &(cs, sn)) in givens.iter().enumerate() {
            let r0 = k + i;
            let a0 = rot[(r0, col)];
            let a1 = rot[(r0 + 1, col)];
            rot[(r0, col)] = a0 * cs + sn * a1;
            rot[(r0 + 1, col)] = -sn.conj() * a0 + a1 * cs;
        }
        let (cs, sn, rr) = givens_rotation(rot[(col, col)], rot[(col + 1, col)]);
        rot[(col, col)] = rr;
        rot[(col + 1, col)] = C64::new(0.0, 0.0);
        let g0 = g[col];
        g[col] = g0 * cs;
        g[col + 1] = -sn.conj() * g0;
        givens.push((cs, sn));

        stats.iterations += 1;
        j += 1;
        let est = g[col + 1].norm();
        stats.history.push(est / bnorm);

        if hnext <= 1e-14 * wn.max(f64::MIN_POSITIVE) || hnext == 0.0 {
            breakdown = true;
            v.push(CVec::zeros(w.len()));
        } else {
            v.push(w * C64::new(1.0 / hnext, 0.0));
        }
        if est <= abs_tol {
            break;
        }
    }

    let dim_used = k + j;
    let mut y = vec![C64::new(0.0, 0.0); dim_used];
    for i in (0..dim_used).rev() {
        let mut s = g[i];
        for l in i + 1..dim_used {
            s -= rot[(i, l)] * y[l];
        }
        y[i] = s / rot[(i, i)];
    }
    let gbar = gbar.view((0, 0), (dim_used + 1, dim_used)).into_owned();
    Cycle { v, gbar, y, steps: j, breakdown }
}

fn givens_rotation(a: C64, b: C64) -> (f64, C64, C64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, C64::new(0.0, 0.0), a);
    }
    if an == 0.0 {
        return (0.0, b.conj() / bn, C64::new(bn, 0.0));
    }
    let r = an.hypot(bn);
    let phase = a / an;
    (an / r, phase * b.conj() / r, phase * r)
}

// Harmonic Ritz update of the recycle space from the last cycle.
fn update_recycle(cyc: &Cycle, ut: &CMat, c: &CMat, s: usize) -> Option<(CMat, CMat)> {
    let k = ut.ncols();
    let j = cyc.steps;
    let mhat = k + j;
    if mhat == 0 {
        return None;
    }
    let n = ut.nrows();
    let mut what = CMat::zeros(n, mhat + 1);
    for i in 0..k {
        what.set_column(i, &c.column(i));
    }
    for i in 0..=j {
        what.set_column(k + i, &cyc.v[i]);
    }
    let mut vhat = CMat::zeros(n, mhat);
    for i in 0..k {
        vhat.set_column(i, &ut.column(i));
    }
    for i in 0..j {
        vhat.set_column(k + i, &cyc.v[i]);
    }
    let g = &cyc.gbar;
    let wv = what.adjoint() * &vhat;
    let lhs = g.adjoint() * g;
    let rhs = g.adjoint() * &wv;

    let vectors = match harmonic_vectors(&lhs, &rhs, s) {
        Some(p) => p,
        None => {
            log::debug!("harmonic Ritz projection degenerate, falling back to Ritz vectors");
            let vv = vhat.adjoint() * &vhat;
            let vw = vhat.adjoint() * &what * g;
            harmonic_vectors(&vw, &vv, s)?
        }
    };
    let gp = g * &vectors;
    let (q, r, kept) = mgs_qr(&gp, 1e-12);
    if kept.is_empty() {
        return None;
    }
    let p = vectors.select_columns(&kept);
    let cnew = &what * q;
    let unew = &vhat * p * upper_inverse(&r);
    Some((unew, cnew))
}

// Eigenvectors of `rhs^{-1} lhs` for the `s` eigenvalues of smallest modulus.
fn harmonic_vectors(lhs: &CMat, rhs: &CMat, s: usize) -> Option<CMat> {
    let lu = LuFactors::with_threshold(rhs, 1e-13).ok()?;
    let mat = lu.solve(lhs);
    let eig = eig_general(&mat).ok()?;
    let mut order: Vec<usize> = (0..eig.values.len()).collect();
    order.sort_by(|&a, &b| eig.values[a].norm().partial_cmp(&eig.values[b].norm()).unwrap().then(a.cmp(&b)));
    let take = s.min(order.len());
    Some(eig.vectors.select_columns(&order[..take]))
}

/// Modified Gram-Schmidt QR with two passes and column dropping; `R` has
/// one row per kept column and one column per kept column.
fn mgs_qr(a: &CMat, tol: f64) -> (CMat, CMat, Vec<usize>) {
    let (n, m) = a.shape();
    let anorm = a.norm();
    let mut q: Vec<CVec> = Vec::with_capacity(m);
    let mut kept = Vec::new();
    let mut r = CMat::zeros(m, m);
    for j in 0..m {
        let mut x = a.column(j).into_owned();
        let mut coeff = vec![C64::new(0.0, 0.0); q.len()];
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let h = qi.dotc(&x);
                coeff[i] += h;
                x.axpy(-h, qi, C64::new(1.0, 0.0));
            }
        }
        let nrm = x.norm();
        if nrm > tol * anorm && nrm > 0.0 {
            let col = kept.len();
            for (i, cf) in coeff.iter().enumerate() {
                r[(i, col)] = *cf;
            }
            r[(col, col)] = C64::new(nrm, 0.0);
            q.push(x * C64::new(1.0 / nrm, 0.0));
            kept.push(j);
        }
    }
    let kq = q.len();
    let qm = if kq == 0 { CMat::zeros(n, 0) } else { CMat::from_columns(&q) };
    (qm, r.view((0, 0), (kq, kq)).into_owned(), kept)
}

fn upper_inverse(r: &CMat) -> CMat {
    let k = r.nrows();
    r.solve_upper_triangular(&CMat::identity(k, k)).expect("nonzero diagonal by construction")
}
