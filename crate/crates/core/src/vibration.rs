//! Damped mass-spring chains: model generation, seed solutions, the
//! average total energy and viscosity optimization.
//!
//! The system has two rows of `d` masses coupled through one extra mass;
//! three dampers with viscosities `v` are attached at positions `i1`, `i2`.

use crate::dense::{generalized_modal, LuFactors, ModalPair};
use crate::ek::{EkOptions, EkSolver, EkStatus};
use crate::gcrodr::RecycleSpace;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::smw::{SmwOffline, SmwOptions, TraceCache};
use crate::{LyapError, ParamLyapProblem, RMat, RVec, Result, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct VibSpec {
    /// Masses per row.
    pub d: usize,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// Internal damping as a multiple of critical damping.
    pub alpha: f64,
    /// Number of lowest eigenfrequencies weighted by `Q`.
    pub s: usize,
    /// One-based, `1 <= i1 <= d`.
    pub i1: usize,
    /// One-based, `d + 1 <= i2 <= 2d`.
    pub i2: usize,
}

impl VibSpec {
    /// Stiffnesses 40/20/30 and `alpha = 0.04`.
    pub fn standard(d: usize, s: usize, i1: usize, i2: usize) -> Self {
        VibSpec { d, k1: 40.0, k2: 20.0, k3: 30.0, alpha: 0.04, s, i1, i2 }
    }

    pub fn masses(&self) -> usize {
        2 * self.d + 1
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d == 0 || !d.is_multiple_of(10) {
            return Err(LyapError::IndivisibleSize { size: d, divisor: 10 });
        }
        for (name, k) in [("k1", self.k1), ("k2", self.k2), ("k3", self.k3), ("alpha", self.alpha)] {
            if !(k > 0.0) {
                return Err(LyapError::Config(format!("{name} must be positive, got {k}")));
            }
        }
        if self.i1 < 1 || self.i1 + d / 10 + d > 2 * d {
            return Err(LyapError::IndexOutOfRange(format!("i1 = {} outside 1..={}", self.i1, d - d / 10)));
        }
        if self.i2 <= d || self.i2 > 2 * d {
            return Err(LyapError::IndexOutOfRange(format!("i2 = {} outside {}..={}", self.i2, d + 1, 2 * d)));
        }
        if self.s == 0 || self.s > self.masses() {
            return Err(LyapError::IndexOutOfRange(format!("s = {} outside 1..={}", self.s, self.masses())));
        }
        Ok(())
    }
}

/// Damper positions of the two reference configurations, rescaled from
/// their original row length to `d`. Returns `(i1 list, i2 list)`.
pub fn reference_positions(case: RefCase, d: usize) -> (Vec<usize>, Vec<usize>) {
    let (d_ref, i1, i2): (usize, &[usize], &[usize]) = match case {
        RefCase::Small => (400, &[50, 130, 210, 290], &[460, 540, 620, 700, 780]),
        RefCase::Large => (1000, &[50, 250, 450, 650, 850], &[1150, 1350, 1550, 1750, 1950]),
    };
    let scale = |i: usize| ((i * d) as f64 / d_ref as f64).round().max(1.0) as usize;
    (i1.iter().map(|&i| scale(i)).collect(), i2.iter().map(|&i| scale(i)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefCase {
    /// 20 configurations, `s = 9` at `d = 400`.
    Small,
    /// 25 configurations, `s = 21` at `d = 1000`.
    Large,
}

/// Masses of the chain. The breakpoints at 500 and 1000 of the reference
/// configuration are taken as `d/2` and `d`, which reproduces it at
/// `d = 1000` and keeps every mass positive for other `d`.
pub fn mass_config(d: usize) -> Result<Vec<f64>> {
    let half = d / 2;
    let mut m = Vec::with_capacity(2 * d + 1);
    for i in 1..=2 * d {
        let mi = if i <= half {
            (2 * d + 1 - 2 * i) as f64 / 10.0
        } else if i <= d {
            (i - half) as f64 / 10.0 + 100.0
        } else {
            160.0
        };
        if !(mi > 0.0) {
            return Err(LyapError::NonPositiveMass { index: i });
        }
        m.push(mi);
    }
    m.push(175.0);
    Ok(m)
}

/// Diagonal mass matrix and the stiffness matrix of the two coupled rows.
pub fn build_mass_spring(spec: &VibSpec) -> Result<(RMat, RMat)> {
    spec.validate()?;
    let d = spec.d;
    let nm = spec.masses();
    let mass = RMat::from_diagonal(&RVec::from_vec(mass_config(d)?));
    let mut k = RMat::zeros(nm, nm);
    for (row, kr) in [(0, spec.k1), (d, spec.k2)] {
        for i in 0..d {
            k[(row + i, row + i)] = 2.0 * kr;
            if i + 1 < d {
                k[(row + i, row + i + 1)] = -kr;
                k[(row + i + 1, row + i)] = -kr;
            }
        }
        k[(row + d - 1, nm - 1)] = -kr;
        k[(nm - 1, row + d - 1)] = -kr;
    }
    k[(nm - 1, nm - 1)] = spec.k1 + spec.k2 + spec.k3;
    Ok((mass, k))
}

/// `B = [e_i1, e_{i1+d/10} - e_{i1+d/10+d}, e_i2]` in mass coordinates.
pub fn damper_geometry(spec: &VibSpec) -> Result<RMat> {
    spec.validate()?;
    let d = spec.d;
    let mut b = RMat::zeros(spec.masses(), 3);
    let j = spec.i1 + d / 10;
    b[(spec.i1 - 1, 0)] = 1.0;
    b[(j - 1, 1)] = 1.0;
    b[(j + d - 1, 1)] = -1.0;
    b[(spec.i2 - 1, 2)] = 1.0;
    Ok(b)
}

/// `Q = 1/(2s) diag(I_s, 0, I_s, 0)` in modal phase coordinates. With
/// `s = m` this is `(1/n) I`.
pub fn modal_q(m: usize, s: usize) -> RMat {
    let mut q = RMat::zeros(2 * m, 2 * m);
    let c = 1.0 / (2 * s) as f64;
    for i in 0..s {
        q[(i, i)] = c;
        q[(m + i, m + i)] = c;
    }
    q
}

/// Solution of `A0 X + X A0^T = -Q` for `A0 = [[0, W], [-W, -alpha W]]`
/// and `Q` from [`modal_q`]. Per mode the 2x2 block is
/// `c [[(1/alpha + alpha/2)/w, -1/(2w)], [-1/(2w), 1/(alpha w)]]`.
pub fn critical_x0(omega: &[f64], alpha: f64, s: usize) -> RMat {
    let m = omega.len();
    let c = 1.0 / (2 * s) as f64;
    let mut x = RMat::zeros(2 * m, 2 * m);
    for (i, &w) in omega.iter().enumerate().take(s) {
        x[(i, i)] = c * (1.0 / alpha + alpha / 2.0) / w;
        x[(i, m + i)] = -c / (2.0 * w);
        x[(m + i, i)] = -c / (2.0 * w);
        x[(m + i, m + i)] = c / (alpha * w);
    }
    x
}

/// `V f(Lambda) V^T` for symmetric `S = V Lambda V^T`.
fn sym_fn(s: &RMat, f: impl Fn(f64) -> f64) -> RMat {
    let e = s.clone().symmetric_eigen();
    let fl = RVec::from_iterator(e.eigenvalues.len(), e.eigenvalues.iter().map(|&l| f(l)));
    &e.eigenvectors * RMat::from_diagonal(&fl) * e.eigenvectors.transpose()
}

/// `alpha M^{1/2} (M^{-1/2} K M^{-1/2})^{1/2} M^{1/2}`.
pub fn critical_damping(m: &RMat, k: &RMat, alpha: f64) -> RMat {
    let mh = sym_fn(m, f64::sqrt);
    let mih = sym_fn(m, |x| 1.0 / x.sqrt());
    let inner = &mih * k * &mih;
    let inner = (&inner + inner.transpose()) * 0.5;
    &mh * sym_fn(&inner, f64::sqrt) * &mh * alpha
}

/// Modal phase-space model with internal damping proportional to critical
/// damping.
#[derive(Clone, Debug)]
pub struct VibModel {
    pub spec: VibSpec,
    pub m: RMat,
    pub k: RMat,
    pub modal: ModalPair,
    pub a0: RMat,
    /// `[0; Phi^T B]`, used on both sides.
    pub b: RMat,
    pub q: RMat,
    pub x0: RMat,
}

impl VibModel {
    pub fn n(&self) -> usize {
        self.a0.nrows()
    }

    pub fn problem(&self) -> ParamLyapProblem {
        ParamLyapProblem::new(self.a0.clone(), self.b.clone(), self.b.clone(), self.q.clone())
            .and_then(|p| p.with_x0(self.x0.clone()))
            .expect("model dimensions are consistent")
    }

    /// `A(v) = [[0, W], [-W, -alpha W - Phi^T B D(v) B^T Phi]]`.
    pub fn a_of(&self, v: &[f64]) -> RMat {
        crate::smw::a_of(&self.a0, &self.b, &self.b, v)
    }
}

pub fn build_vib_model(spec: &VibSpec) -> Result<VibModel> {
    let (m, k) = build_mass_spring(spec)?;
    let b_mass = damper_geometry(spec)?;
    let modal = generalized_modal(&k, &m)?;
    let nm = spec.masses();
    let n = 2 * nm;
    let mut a0 = RMat::zeros(n, n);
    for i in 0..nm {
        let w = modal.omega[i];
        a0[(i, nm + i)] = w;
        a0[(nm + i, i)] = -w;
        a0[(nm + i, nm + i)] = -spec.alpha * w;
    }
    let mut b = RMat::zeros(n, 3);
    b.rows_mut(nm, nm).copy_from(&(modal.phi.transpose() * &b_mass));
    let q = modal_q(nm, spec.s);
    let x0 = critical_x0(modal.omega.as_slice(), spec.alpha, spec.s);
    Ok(VibModel { spec: spec.clone(), m, k, modal, a0, b, q, x0 })
}

/// Phase-space model `[[0, I], [-M^{-1}K, -alpha I - beta M^{-1} K]]` with
/// Rayleigh internal damping and `Q = diag(K^{-1}, M^{-1})`.
#[derive(Clone, Debug)]
pub struct RayleighModel {
    pub a0: RMat,
    pub bl: RMat,
    pub br: RMat,
    pub q: RMat,
    pub x0: RMat,
    /// Closed-form eigenvalues of `A0`.
    pub eigs: Vec<C64>,
}

impl RayleighModel {
    pub fn problem(&self) -> ParamLyapProblem {
        ParamLyapProblem::new(self.a0.clone(), self.bl.clone(), self.br.clone(), self.q.clone())
            .and_then(|p| p.with_x0(self.x0.clone()))
            .expect("model dimensions are consistent")
    }
}

/// `(-(alpha + beta l) +- sqrt((alpha + beta l)^2 - 4 l)) / 2` for each
/// eigenvalue `l` of the pair `(K, M)`.
pub fn rayleigh_eigenvalues(lambdas: &[f64], alpha: f64, beta: f64) -> Vec<C64> {
    let mut out = Vec::with_capacity(2 * lambdas.len());
    for &l in lambdas {
        let c = alpha + beta * l;
        let disc = C64::new(c * c - 4.0 * l, 0.0).sqrt();
        out.push((C64::new(-c, 0.0) + disc) * 0.5);
        out.push((C64::new(-c, 0.0) - disc) * 0.5);
    }
    out
}

/// Rayleigh-damped model with dampers `B` (mass coordinates).
///
/// The seed solution is
/// `[[Ci^{-1} M K^{-1} + (alpha/2) K^{-1} M K^{-1} + (beta/2) K^{-1}, -K^{-1}/2], [-K^{-1}/2, Ci^{-1}]]`
/// with `Ci = alpha M + beta K`.
pub fn build_rayleigh_model(m: &RMat, k: &RMat, b: &RMat, alpha: f64, beta: f64) -> Result<RayleighModel> {
    let nm = m.nrows();
    if !(alpha >= 0.0 && beta >= 0.0 && alpha * alpha + beta * beta > 0.0) {
        return Err(LyapError::Config(format!("Rayleigh coefficients alpha={alpha}, beta={beta}")));
    }
    if k.shape() != (nm, nm) || b.nrows() != nm {
        return Err(LyapError::DimensionMismatch(format!("M {:?}, K {:?}, B {:?}", m.shape(), k.shape(), b.shape())));
    }
    let modal = generalized_modal(k, m)?;
    let mlu = LuFactors::new(m).map_err(|_| LyapError::NotSpd)?;
    let klu = LuFactors::new(k).map_err(|_| LyapError::NotSpd)?;
    let minv_k = mlu.solve(k);
    let id = RMat::identity(nm, nm);
    let kinv = klu.solve(&id);
    let minv = mlu.solve(&id);

    let n = 2 * nm;
    let mut a0 = RMat::zeros(n, n);
    a0.view_mut((0, nm), (nm, nm)).copy_from(&id);
    a0.view_mut((nm, 0), (nm, nm)).copy_from(&(-&minv_k));
    a0.view_mut((nm, nm), (nm, nm)).copy_from(&(-(&id * alpha) - &minv_k * beta));
    let kk = b.ncols();
    let mut bl = RMat::zeros(n, kk);
    bl.rows_mut(nm, nm).copy_from(&mlu.solve(b));
    let mut br = RMat::zeros(n, kk);
    br.rows_mut(nm, nm).copy_from(b);
    let mut q = RMat::zeros(n, n);
    q.view_mut((0, 0), (nm, nm)).copy_from(&kinv);
    q.view_mut((nm, nm), (nm, nm)).copy_from(&minv);

    let ci = m * alpha + k * beta;
    let ci_inv = LuFactors::new(&ci).map_err(|_| LyapError::NotSpd)?.solve(&id);
    let x11 = &ci_inv * m * &kinv + (&kinv * m * &kinv) * (alpha / 2.0) + &kinv * (beta / 2.0);
    let mut x0 = RMat::zeros(n, n);
    x0.view_mut((0, 0), (nm, nm)).copy_from(&((&x11 + x11.transpose()) * 0.5));
    x0.view_mut((0, nm), (nm, nm)).copy_from(&(&kinv * -0.5));
    x0.view_mut((nm, 0), (nm, nm)).copy_from(&(&kinv * -0.5));
    x0.view_mut((nm, nm), (nm, nm)).copy_from(&ci_inv);

    let lambdas: Vec<f64> = modal.omega.iter().map(|w| w * w).collect();
    let eigs = rayleigh_eigenvalues(&lambdas, alpha, beta);
    Ok(RayleighModel { a0, bl, br, q, x0, eigs })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Dense,
    Smw,
    Ek,
}

impl std::str::FromStr for Backend {
    type Err = LyapError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Backend::Dense),
            "smw" => Ok(Backend::Smw),
            "ek" => Ok(Backend::Ek),
            _ => Err(LyapError::Config(format!("unknown backend {s:?} (dense, smw, ek)"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolverSettings {
    pub smw: SmwOptions,
    pub ek: EkOptions,
}

/// One recorded evaluation of the energy.
#[derive(Clone, Debug)]
pub struct EnergyRecord {
    pub v: Vec<f64>,
    pub energy: f64,
    pub inner_iters: usize,
    pub expansions: usize,
    pub basis_dim: usize,
    pub backward_error: f64,
}

enum State {
    Dense(ParamLyapProblem),
    Smw { off: Box<SmwOffline>, cache: TraceCache, recycle: Option<RecycleSpace>, opts: SmwOptions },
    Ek(Box<EkSolver>),
}

/// Stateful energy evaluation: offline data and recycle spaces persist
/// across calls.
pub struct EnergyEvaluator {
    state: State,
    pub history: Vec<EnergyRecord>,
    pub negative_probes: usize,
}

impl EnergyEvaluator {
    pub fn new(problem: &ParamLyapProblem, backend: Backend, settings: &SolverSettings) -> Result<Self> {
        let state = match backend {
            Backend::Dense => State::Dense(problem.clone()),
            Backend::Smw => {
                let off = SmwOffline::new(problem, settings.smw.pbar)?;
                let cache = off.trace_cache(None);
                State::Smw { off: Box::new(off), cache, recycle: None, opts: settings.smw.clone() }
            }
            Backend::Ek => State::Ek(Box::new(EkSolver::new(problem, None, settings.ek.clone())?)),
        };
        Ok(EnergyEvaluator { state, history: vec![], negative_probes: 0 })
    }

    /// `trace(X(v))`.
    pub fn energy(&mut self, v: &[f64]) -> Result<f64> {
        if v.iter().any(|&x| x <= 0.0) {
            self.negative_probes += 1;
            log::warn!("non-positive viscosity probed: {v:?}");
        }
        let rec = match &mut self.state {
            State::Dense(p) => {
                let x = p.solve_dense(v)?;
                EnergyRecord { v: v.to_vec(), energy: x.trace(), inner_iters: 0, expansions: 0, basis_dim: p.n(), backward_error: 0.0 }
            }
            State::Smw { off, cache, recycle, opts } => {
                let (sol, next) = off.solve(v, recycle.take(), opts)?;
                *recycle = next;
                let e = off.trace(&sol, cache);
                EnergyRecord {
                    v: v.to_vec(),
                    energy: e,
                    inner_iters: sol.stats.iterations,
                    expansions: 0,
                    basis_dim: off.n(),
                    backward_error: sol.stats.relres,
                }
            }
            State::Ek(s) => {
                let r = s.evaluate(v);
                match (r.status, r.f_value) {
                    (EkStatus::Unconverged, _) | (_, None) => return Err(LyapError::NonConvergence),
                    (_, Some(f)) => EnergyRecord {
                        v: v.to_vec(),
                        energy: f,
                        inner_iters: r.inner_iters,
                        expansions: r.expansions,
                        basis_dim: r.basis_dim,
                        backward_error: r.backward_error,
                    },
                }
            }
        };
        let e = rec.energy;
        self.history.push(rec);
        Ok(e)
    }

    pub fn total_inner_iters(&self) -> usize {
        self.history.iter().map(|r| r.inner_iters).sum()
    }

    pub fn total_expansions(&self) -> usize {
        self.history.iter().map(|r| r.expansions).sum()
    }
}

/// One-shot energy evaluation.
pub fn total_energy(model: &VibModel, v: &[f64], backend: Backend) -> Result<f64> {
    EnergyEvaluator::new(&model.problem(), backend, &SolverSettings::default())?.energy(v)
}

#[derive(Clone, Debug)]
pub struct OptimizationRun {
    pub v: Vec<f64>,
    pub energy: f64,
    pub evals: usize,
}

/// Nelder-Mead over the viscosities. Failed evaluations count as `+inf`.
pub fn optimize_viscosities(eval: &mut EnergyEvaluator, v0: &[f64], tol: f64) -> Result<OptimizationRun> {
    optimize_with(eval, v0, &NelderMeadOptions::with_tol(tol))
}

pub fn optimize_with(eval: &mut EnergyEvaluator, v0: &[f64], opts: &NelderMeadOptions) -> Result<OptimizationRun> {
    let r = nelder_mead(
        |v| match eval.energy(v) {
            Ok(e) => e,
            Err(err) => {
                log::warn!("energy evaluation failed at {v:?}: {err}");
                f64::INFINITY
            }
        },
        v0,
        opts,
    )?;
    Ok(OptimizationRun { v: r.x, energy: r.f, evals: r.evals })
}
