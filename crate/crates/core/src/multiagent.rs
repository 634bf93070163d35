//! Networks of linear agents coupled through an output synchronization
//! protocol, and H2 sweeps over low-rank variations of single agents or
//! consecutive pairs.
//!
//! The closed loop matrix has blocks `A_ij = delta_ij A_i - l_ij B_i K_i C_j`.
//! A perturbed network `A(v) = A - Bl D(v) Br^T` is analysed through
//! `trace(E E^T X)` with `A(v)^T X + X A(v) = -C^T C`, so the solvers see
//! the coefficient `A(v)^T = A^T - Br D(v) Bl^T`.

use std::time::Instant;

use rayon::prelude::*;

use crate::dense::{solve_lyap_dense, spectral_abscissa};
use crate::ek::{EkSolver, EkStatus};
use crate::gcrodr::RecycleSpace;
use crate::smw::{SmwOffline, TraceCache};
use crate::vibration::{Backend, SolverSettings};
use crate::{LyapError, ParamLyapProblem, RMat, Result};

/// Per-agent matrices `A_i, B_i, C_i, K_i`.
#[derive(Clone, Debug)]
pub struct AgentSet {
    pub a: Vec<RMat>,
    pub b: Vec<RMat>,
    pub c: Vec<RMat>,
    pub k: Vec<RMat>,
}

impl AgentSet {
    pub fn uniform(m: usize, a: RMat, b: RMat, c: RMat, k: RMat) -> Self {
        AgentSet { a: vec![a; m], b: vec![b; m], c: vec![c; m], k: vec![k; m] }
    }

    /// `m` copies of the 2x2 agent `A = [[-10, 5], [5, -8]]`,
    /// `K = diag(0.3, 0.2)`, `B = C^T = [[1, 1], [-1, 1]]`.
    pub fn example(m: usize) -> Self {
        let a = RMat::from_row_slice(2, 2, &[-10.0, 5.0, 5.0, -8.0]);
        let k = RMat::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.2]);
        let b = RMat::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        let c = b.transpose();
        Self::uniform(m, a, b, c, k)
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// State dimension of one agent.
    pub fn state_dim(&self) -> usize {
        self.a.first().map_or(0, |a| a.nrows())
    }

    fn validate(&self) -> Result<()> {
        let m = self.len();
        if m == 0 || self.b.len() != m || self.c.len() != m || self.k.len() != m {
            return Err(LyapError::DimensionMismatch("agent lists must be nonempty and of equal length".into()));
        }
        let n = self.state_dim();
        let (p_in, p_out) = (self.b[0].ncols(), self.c[0].nrows());
        for i in 0..m {
            let ok = self.a[i].shape() == (n, n) && self.b[i].shape() == (n, p_in) && self.c[i].shape() == (p_out, n) && self.k[i].shape() == (p_in, p_out);
            if !ok {
                return Err(LyapError::DimensionMismatch(format!("agent {} has inconsistent matrix sizes", i + 1)));
            }
        }
        Ok(())
    }
}

/// Closed loop network matrices.
#[derive(Clone, Debug)]
pub struct NetworkModel {
    pub laplacian: RMat,
    pub a: RMat,
    /// `blkdiag(C_i)`.
    pub c: RMat,
    /// State dimension of one agent.
    pub agent_dim: usize,
}

impl NetworkModel {
    pub fn agents(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

/// Check that `l` is a graph Laplacian: symmetric, nonpositive off the
/// diagonal, zero row sums.
pub fn check_laplacian(l: &RMat) -> Result<()> {
    let m = l.nrows();
    if l.ncols() != m {
        return Err(LyapError::DimensionMismatch(format!("Laplacian must be square, got {:?}", l.shape())));
    }
    let scale = l.amax().max(1.0);
    for i in 0..m {
        for j in 0..m {
            if l[(i, j)] != l[(j, i)] {
                return Err(LyapError::Config(format!("Laplacian is not symmetric at ({}, {})", i + 1, j + 1)));
            }
            if i != j && l[(i, j)] > 0.0 {
                return Err(LyapError::Config(format!("positive off-diagonal Laplacian entry at ({}, {})", i + 1, j + 1)));
            }
        }
        if l.row(i).sum().abs() > 1e-12 * scale {
            return Err(LyapError::Config(format!("Laplacian row {} does not sum to zero", i + 1)));
        }
    }
    Ok(())
}

/// Laplacian of an undirected graph given by one-based edges.
pub fn laplacian_from_edges(m: usize, edges: &[(usize, usize)]) -> Result<RMat> {
    let mut l = RMat::zeros(m, m);
    for &(i, j) in edges {
        if i == 0 || j == 0 || i > m || j > m || i == j {
            return Err(LyapError::IndexOutOfRange(format!("edge ({i}, {j}) in a graph with {m} nodes")));
        }
        l[(i - 1, j - 1)] = -1.0;
        l[(j - 1, i - 1)] = -1.0;
    }
    for i in 0..m {
        l[(i, i)] = 0.0;
        l[(i, i)] = -l.row(i).sum();
    }
    Ok(l)
}

pub fn ring_laplacian(m: usize) -> Result<RMat> {
    if m < 3 {
        return Err(LyapError::DimensionMismatch(format!("a ring needs at least 3 nodes, got {m}")));
    }
    let edges: Vec<_> = (1..=m).map(|i| (i, i % m + 1)).collect();
    laplacian_from_edges(m, &edges)
}

/// Laplacian of the `rows x cols` grid graph, nodes numbered row by row.
pub fn grid_laplacian(rows: usize, cols: usize) -> Result<RMat> {
    let id = |r: usize, c: usize| r * cols + c + 1;
    let mut edges = vec![];
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    laplacian_from_edges(rows * cols, &edges)
}

/// The benchmark topology: a path with every node also linked to node `m`,
/// with some links removed. All index expressions must be integers, so `m`
/// has to be a multiple of 200.
pub fn laplacian_alg2(m: usize) -> Result<RMat> {
    if m == 0 || !m.is_multiple_of(200) {
        return Err(LyapError::IndivisibleSize { size: m, divisor: 200 });
    }
    let range = |a: usize, b: usize| a..=b;
    let r: Vec<usize> = range(m / 20 + m / 50, m / 10)
        .chain(range(m / 4 + m / 20, m / 4 + m / 10))
        .chain(range(m / 2 + m / 20 + 2, m / 2 + m / 20 + m / 50))
        .chain(range(m / 2 + m / 10 + 2, m / 2 + m / 10 + m / 20))
        .chain(range(m - m / 10, m - m / 20))
        .collect();
    let h: Vec<usize> =
        range(1, m / 20).chain(range(m / 10 + m / 40, m / 10 + m / 20)).chain(range(m / 2, m / 2 + m / 20)).chain(std::iter::once(m - 1)).collect();

    // one-based indexing below, as in the pseudocode
    let mut l = RMat::zeros(m, m);
    let set = |l: &mut RMat, i: usize, j: usize, x: f64| l[(i - 1, j - 1)] = x;
    for i in 1..=m - 2 {
        set(&mut l, i, i + 1, -1.0);
        set(&mut l, i, m, -1.0);
    }
    set(&mut l, 1, m - 1, -1.0);
    set(&mut l, m - 1, m, -1.0);
    for &ri in &r {
        if ri == m - 1 {
            set(&mut l, 1, m - 1, 0.0);
        } else {
            set(&mut l, ri, ri + 1, 0.0);
        }
    }
    for &hi in &h {
        set(&mut l, hi, m, 0.0);
    }
    let mut l = &l + l.transpose();
    for i in 0..m {
        l[(i, i)] = -l.row(i).sum();
    }
    Ok(l)
}

/// Assemble `A_ij = delta_ij A_i - l_ij B_i K_i C_j` and `C = blkdiag(C_i)`.
pub fn assemble_network(l: &RMat, agents: &AgentSet) -> Result<NetworkModel> {
    agents.validate()?;
    let m = agents.len();
    if l.shape() != (m, m) {
        return Err(LyapError::DimensionMismatch(format!("Laplacian is {:?} for {m} agents", l.shape())));
    }
    let n = agents.state_dim();
    let p = agents.c[0].nrows();
    let mut a = RMat::zeros(n * m, n * m);
    let mut c = RMat::zeros(p * m, n * m);
    let bk: Vec<RMat> = (0..m).map(|i| &agents.b[i] * &agents.k[i]).collect();
    for i in 0..m {
        c.view_mut((p * i, n * i), (p, n)).copy_from(&agents.c[i]);
        for j in 0..m {
            let lij = l[(i, j)];
            let mut blk = if lij != 0.0 { &bk[i] * &agents.c[j] * (-lij) } else { RMat::zeros(n, n) };
            if i == j {
                blk += &agents.a[i];
            }
            a.view_mut((n * i, n * j), (n, n)).copy_from(&blk);
        }
    }
    Ok(NetworkModel { laplacian: l.clone(), a, c, agent_dim: n })
}

/// How the parameters fill the diagonal of `D(v)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamMap {
    /// `(v1, v2, v3) -> diag(v1, v2, v2, v3)`.
    SingleAgent,
    /// `(v1, v2) -> diag(v1, v1, v2, v2)`.
    Pair,
}

impl ParamMap {
    pub fn params(self) -> usize {
        match self {
            ParamMap::SingleAgent => 3,
            ParamMap::Pair => 2,
        }
    }

    pub fn expand(self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.params() {
            return Err(LyapError::DimensionMismatch(format!("expected {} parameters, got {}", self.params(), v.len())));
        }
        Ok(match self {
            ParamMap::SingleAgent => vec![v[0], v[1], v[1], v[2]],
            ParamMap::Pair => vec![v[0], v[0], v[1], v[1]],
        })
    }
}

/// Low-rank variation `Bl D(v) Br^T` of a network matrix.
#[derive(Clone, Debug)]
pub struct PerturbationSpec {
    pub bl: RMat,
    pub br: RMat,
    pub map: ParamMap,
    /// Agent index (single agent) or odd row index (pair), one-based.
    pub index: usize,
}

impl PerturbationSpec {
    /// `Bl D(v) Br^T`.
    pub fn update(&self, v: &[f64]) -> Result<RMat> {
        let d = self.map.expand(v)?;
        let mut bd = self.bl.clone();
        for (j, dj) in d.iter().enumerate() {
            bd.column_mut(j).scale_mut(*dj);
        }
        Ok(bd * self.br.transpose())
    }

    /// One-based indices of the agents whose blocks are modified.
    pub fn agents(&self) -> Vec<usize> {
        match self.map {
            ParamMap::SingleAgent => vec![self.index],
            ParamMap::Pair => vec![self.index.div_ceil(2), self.index.div_ceil(2) + 1],
        }
    }
}

fn require_two(n: usize) -> Result<()> {
    if n != 2 {
        return Err(LyapError::DimensionMismatch(format!("perturbation patterns are defined for 2x2 agents, got n = {n}")));
    }
    Ok(())
}

/// Modify the diagonal block of agent `k`: `v1`, `v3` on its diagonal and
/// `v2` on both off-diagonal entries.
pub fn perturbation_single_agent(k: usize, m: usize, n: usize) -> Result<PerturbationSpec> {
    require_two(n)?;
    if k == 0 || k > m {
        return Err(LyapError::IndexOutOfRange(format!("agent {k} of {m}")));
    }
    let mut bl = RMat::zeros(n * m, 4);
    let mut br = RMat::zeros(n * m, 4);
    let r = 2 * (k - 1);
    bl.view_mut((r, 0), (2, 4)).copy_from_slice(&[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    br.view_mut((r, 0), (2, 4)).copy_from_slice(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    Ok(PerturbationSpec { bl, br, map: ParamMap::SingleAgent, index: k })
}

/// Modify the off-diagonal entries of two consecutive agent blocks starting
/// at the odd row `k` (`1 <= k <= 2m - 3`).
pub fn perturbation_pair(k: usize, m: usize, n: usize) -> Result<PerturbationSpec> {
    require_two(n)?;
    if k.is_multiple_of(2) {
        return Err(LyapError::EvenIndex(k));
    }
    if k + 3 > n * m {
        return Err(LyapError::IndexOutOfRange(format!("row {k} with {m} agents (need k <= {})", n * m - 3)));
    }
    let mut bl = RMat::zeros(n * m, 4);
    let mut br = RMat::zeros(n * m, 4);
    let r = k - 1;
    bl[(r, 1)] = 1.0;
    bl[(r + 1, 0)] = 1.0;
    bl[(r + 2, 3)] = 1.0;
    bl[(r + 3, 2)] = 1.0;
    br.view_mut((r, 0), (4, 4)).fill_with_identity();
    Ok(PerturbationSpec { bl, br, map: ParamMap::Pair, index: k })
}

/// Strict Hurwitz test: every eigenvalue has negative real part.
pub fn is_stable(a: &RMat) -> Result<bool> {
    Ok(spectral_abscissa(a)? < 0.0)
}

/// `H (x) I_n` with `H = [e_i1, e_i2, ...]` for one-based agent indices.
pub fn disturbance_matrix(agents: &[usize], m: usize, n: usize) -> Result<RMat> {
    let mut e = RMat::zeros(n * m, n * agents.len());
    for (col, &i) in agents.iter().enumerate() {
        if i == 0 || i > m {
            return Err(LyapError::IndexOutOfRange(format!("agent {i} of {m}")));
        }
        e.view_mut((n * (i - 1), n * col), (n, n)).fill_with_identity();
    }
    Ok(e)
}

/// `(P (x) I) C` with `P` the orthogonal projector onto the given agents.
pub fn project_output(c: &RMat, agents: &[usize], m: usize) -> Result<RMat> {
    if m == 0 || !c.nrows().is_multiple_of(m) {
        return Err(LyapError::DimensionMismatch(format!("C has {} rows for {m} agents", c.nrows())));
    }
    let p = c.nrows() / m;
    let mut out = RMat::zeros(c.nrows(), c.ncols());
    for &i in agents {
        if i == 0 || i > m {
            return Err(LyapError::IndexOutOfRange(format!("agent {i} of {m}")));
        }
        out.rows_mut(p * (i - 1), p).copy_from(&c.rows(p * (i - 1), p));
    }
    Ok(out)
}

/// Squared H2 norm `trace(E E^T X)` with `A^T X + X A = -C^T C`, by the
/// dense solver.
pub fn h2_sq(a: &RMat, e: &RMat, c: &RMat) -> Result<f64> {
    if !is_stable(a)? {
        return Err(LyapError::Unstable);
    }
    if e.nrows() != a.nrows() || c.ncols() != a.nrows() {
        return Err(LyapError::DimensionMismatch(format!("A {:?}, E {:?}, C {:?}", a.shape(), e.shape(), c.shape())));
    }
    let x = solve_lyap_dense(&a.transpose(), &(c.transpose() * c))?;
    Ok((e.transpose() * x * e).trace())
}

/// Which disturbance matrix `E` to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Disturbance {
    /// `E = I`: all agents disturbed independently.
    All,
    /// `E = H (x) I` with `H` selecting the perturbed agents.
    Perturbed,
}

/// Which perturbation pattern a sweep applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    SingleAgent,
    Pair,
}

impl Family {
    pub fn params(self) -> usize {
        match self {
            Family::SingleAgent => ParamMap::SingleAgent.params(),
            Family::Pair => ParamMap::Pair.params(),
        }
    }

    pub fn perturbation(self, index: usize, m: usize, n: usize) -> Result<PerturbationSpec> {
        match self {
            Family::SingleAgent => perturbation_single_agent(index, m, n),
            Family::Pair => perturbation_pair(index, m, n),
        }
    }
}

/// Result of one H2 evaluation.
#[derive(Clone, Debug)]
pub struct H2Record {
    pub h2_sq: f64,
    pub backward_error: f64,
    pub inner_iters: usize,
    pub basis_dim: usize,
    pub expansions: usize,
}

enum State {
    Dense,
    Smw { off: Box<SmwOffline>, cache: TraceCache, recycle: Option<RecycleSpace> },
    Ek(Box<EkSolver>),
}

/// H2 evaluation for one perturbation family member; offline data and
/// recycled spaces persist across parameters.
pub struct H2Evaluator {
    problem: ParamLyapProblem,
    map: ParamMap,
    weight: RMat,
    settings: SolverSettings,
    state: State,
}

impl H2Evaluator {
    /// `c` replaces the network output matrix when given (e.g. a projected
    /// output from [`project_output`]).
    pub fn new(model: &NetworkModel, pert: &PerturbationSpec, e: &RMat, c: Option<&RMat>, backend: Backend, settings: &SolverSettings) -> Result<Self> {
        let c = c.unwrap_or(&model.c);
        let q = c.transpose() * c;
        let problem = ParamLyapProblem::new(model.a.transpose(), pert.br.clone(), pert.bl.clone(), q)?;
        if e.nrows() != model.n() {
            return Err(LyapError::DimensionMismatch(format!("E has {} rows, network has {}", e.nrows(), model.n())));
        }
        let weight = e * e.transpose();
        let state = match backend {
            Backend::Dense => State::Dense,
            Backend::Smw => {
                let off = SmwOffline::new(&problem, settings.smw.pbar)?;
                let cache = off.trace_cache(Some(&weight));
                State::Smw { off: Box::new(off), cache, recycle: None }
            }
            Backend::Ek => State::Ek(Box::new(EkSolver::new(&problem, Some(weight.clone()), settings.ek.clone())?)),
        };
        Ok(H2Evaluator { problem, map: pert.map, weight, settings: settings.clone(), state })
    }

    /// The perturbed network matrix `A(v)`.
    pub fn network_matrix(&self, v: &[f64]) -> Result<RMat> {
        Ok(self.problem.a_of(&self.map.expand(v)?).transpose())
    }

    pub fn is_stable(&self, v: &[f64]) -> Result<bool> {
        is_stable(&self.network_matrix(v)?)
    }

    /// `trace(E E^T X(v))` by the dense solver, whatever the backend.
    pub fn evaluate_dense(&self, v: &[f64]) -> Result<H2Record> {
        let x = self.problem.solve_dense(&self.map.expand(v)?)?;
        Ok(H2Record { h2_sq: (&self.weight * x).trace(), backward_error: 0.0, inner_iters: 0, basis_dim: self.problem.n(), expansions: 0 })
    }

    /// `trace(E E^T X(v))`, without a stability check.
    pub fn evaluate(&mut self, v: &[f64]) -> Result<H2Record> {
        let d = self.map.expand(v)?;
        match &mut self.state {
            State::Dense => self.evaluate_dense(v),
            State::Smw { off, cache, recycle } => {
                let (sol, next) = off.solve(&d, recycle.take(), &self.settings.smw)?;
                *recycle = next;
                Ok(H2Record {
                    h2_sq: off.trace(&sol, cache),
                    backward_error: sol.stats.relres,
                    inner_iters: sol.stats.iterations,
                    basis_dim: off.n(),
                    expansions: 0,
                })
            }
            State::Ek(s) => {
                let r = s.evaluate(&d);
                match (r.status, r.f_value) {
                    (EkStatus::Unconverged, _) | (_, None) => Err(LyapError::NonConvergence),
                    (_, Some(f)) => Ok(H2Record {
                        h2_sq: f,
                        backward_error: r.backward_error,
                        inner_iters: r.inner_iters,
                        basis_dim: r.basis_dim,
                        expansions: r.expansions,
                    }),
                }
            }
        }
    }
}

/// Grid values `start, start + step, ..., stop`, rounded to 10 decimals.
pub fn grid_axis(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step).round() as usize + 1;
    (0..count).map(|i| format!("{:.10}", start + i as f64 * step).parse().expect("formatted float")).collect()
}

/// All combinations of the axis values, last axis fastest.
pub fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![vec![]], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect()
    })
}

/// `-9.9, -8.9, ..., 10.1` (21 values).
pub fn single_agent_axis() -> Vec<f64> {
    grid_axis(-9.9, 10.1, 1.0)
}

/// `-4.9, -4.4, ..., 14.6` (40 values).
pub fn pair_axis() -> Vec<f64> {
    grid_axis(-4.9, 14.6, 0.5)
}

/// Five-point thinning of [`single_agent_axis`] for small runs.
pub fn desk_axis() -> Vec<f64> {
    grid_axis(-9.9, 10.1, 5.0)
}

/// Row indices of the pair sweep as given in the text.
pub const PAIR_KSET_TEXT: [usize; 4] = [61, 141, 221, 301];
/// Row indices of the pair sweep as given in the results table.
pub const PAIR_KSET_TABLE: [usize; 4] = [41, 121, 201, 281];

/// One `(k, v)` cell of a sweep.
#[derive(Clone, Debug)]
pub struct MasCell {
    pub k: usize,
    pub v: Vec<f64>,
    pub stable: bool,
    pub record: Option<H2Record>,
    pub error: Option<String>,
    pub wall_ms: f64,
}

/// Largest `trace(E E^T X)` found for one `k`.
#[derive(Clone, Debug)]
pub struct KMaximum {
    pub k: usize,
    pub h2_sq: f64,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MasSweep {
    /// Ordered by `k` as given, then by grid position.
    pub cells: Vec<MasCell>,
    pub stable: usize,
    pub unstable: usize,
    pub failed: usize,
    pub maxima: Vec<KMaximum>,
}

/// Sweep configuration.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub family: Family,
    pub kset: Vec<usize>,
    pub grid: Vec<Vec<f64>>,
    pub disturbance: Disturbance,
    /// Restrict the output to these agents.
    pub output_agents: Option<Vec<usize>>,
}

/// Evaluate `trace(E E^T X)` on every stable `(k, v)` cell.
///
/// Different `k` run in parallel. With the dense backend the grid of each
/// `k` is also split across threads; the other backends walk it in order
/// so that recycled data flows from one parameter to the next.
pub fn sweep_grid(model: &NetworkModel, spec: &SweepSpec, backend: Backend, settings: &SolverSettings) -> Result<MasSweep> {
    let m = model.agents();
    let n = model.agent_dim;
    if let Some(v) = spec.grid.iter().find(|v| v.contains(&0.0)) {
        return Err(LyapError::Config(format!("grid point {v:?} has a zero parameter")));
    }
    let np = spec.family.params();
    if let Some(v) = spec.grid.iter().find(|v| v.len() != np) {
        return Err(LyapError::Config(format!("grid point {v:?} has {} entries, the family takes {np}", v.len())));
    }
    let c = match &spec.output_agents {
        Some(agents) => Some(project_output(&model.c, agents, m)?),
        None => None,
    };
    let mut setups = Vec::with_capacity(spec.kset.len());
    for &k in &spec.kset {
        let pert = spec.family.perturbation(k, m, n)?;
        let e = match spec.disturbance {
            Disturbance::All => RMat::identity(n * m, n * m),
            Disturbance::Perturbed => disturbance_matrix(&pert.agents(), m, n)?,
        };
        setups.push((k, pert, e));
    }

    let per_k: Vec<Result<Vec<MasCell>>> = setups
        .par_iter()
        .map(|(k, pert, e)| {
            let run_cell = |stable: Result<bool>, solve: &mut dyn FnMut() -> Result<H2Record>, v: &Vec<f64>, start: Instant| {
                let mut cell = MasCell { k: *k, v: v.clone(), stable: false, record: None, error: None, wall_ms: 0.0 };
                match stable {
                    Ok(true) => {
                        cell.stable = true;
                        match solve() {
                            Ok(r) => cell.record = Some(r),
                            Err(err) => cell.error = Some(err.to_string()),
                        }
                    }
                    Ok(false) => {}
                    Err(err) => cell.error = Some(err.to_string()),
                }
                cell.wall_ms = start.elapsed().as_secs_f64() * 1e3;
                cell
            };
            let mut eval = H2Evaluator::new(model, pert, e, c.as_ref(), backend, settings)?;
            let cells = if backend == Backend::Dense {
                let eval = &eval;
                spec.grid
                    .par_iter()
                    .map(|v| {
                        let start = Instant::now();
                        run_cell(eval.is_stable(v), &mut || eval.evaluate_dense(v), v, start)
                    })
                    .collect()
            } else {
                spec.grid
                    .iter()
                    .map(|v| {
                        let start = Instant::now();
                        let stable = eval.is_stable(v);
                        run_cell(stable, &mut || eval.evaluate(v), v, start)
                    })
                    .collect()
            };
            Ok(cells)
        })
        .collect();

    let mut cells = Vec::new();
    let mut maxima = Vec::new();
    for (res, (k, _, _)) in per_k.into_iter().zip(&setups) {
        let group = res?;
        let best = group.iter().filter_map(|c| c.record.as_ref().map(|r| (r.h2_sq, &c.v))).max_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((h, v)) = best {
            maxima.push(KMaximum { k: *k, h2_sq: h, v: v.clone() });
        }
        cells.extend(group);
    }
    let stable = cells.iter().filter(|c| c.stable).count();
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    // a cell whose stability check errored is neither stable nor unstable
    let unstable = cells.iter().filter(|c| !c.stable && c.error.is_none()).count();
    Ok(MasSweep { stable, unstable, failed, cells, maxima })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_have_expected_lengths() {
        let a = single_agent_axis();
        assert_eq!(a.len(), 21);
        assert_eq!(a[0], -9.9);
        assert_eq!(a[20], 10.1);
        let p = pair_axis();
        assert_eq!(p.len(), 40);
        assert_eq!(p[39], 14.6);
        assert_eq!(desk_axis(), vec![-9.9, -4.9, 0.1, 5.1, 10.1]);
        assert!(a.iter().chain(&p).all(|&x| x != 0.0));
    }

    #[test]
    fn cartesian_order() {
        let g = cartesian(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(g, vec![vec![1.0, 3.0], vec![1.0, 4.0], vec![2.0, 3.0], vec![2.0, 4.0]]);
    }

    #[test]
    fn param_maps() {
        assert_eq!(ParamMap::SingleAgent.expand(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 2.0, 3.0]);
        assert_eq!(ParamMap::Pair.expand(&[1.0, 2.0]).unwrap(), vec![1.0, 1.0, 2.0, 2.0]);
        assert!(ParamMap::Pair.expand(&[1.0]).is_err());
    }

    #[test]
    fn index_errors() {
        assert!(matches!(perturbation_single_agent(0, 4, 2), Err(LyapError::IndexOutOfRange(_))));
        assert!(matches!(perturbation_single_agent(5, 4, 2), Err(LyapError::IndexOutOfRange(_))));
        assert!(matches!(perturbation_pair(2, 4, 2), Err(LyapError::EvenIndex(2))));
        assert!(matches!(perturbation_pair(7, 4, 2), Err(LyapError::IndexOutOfRange(_))));
        assert!(perturbation_pair(5, 4, 2).is_ok());
        assert!(matches!(laplacian_alg2(30), Err(LyapError::IndivisibleSize { .. })));
    }

    #[test]
    fn rotation_is_not_stable() {
        assert!(!is_stable(&RMat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap());
        assert!(is_stable(&(-RMat::identity(3, 3))).unwrap());
    }
}
