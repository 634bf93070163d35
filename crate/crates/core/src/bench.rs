//! End-to-end drivers: a TOML/CLI run configuration, parameter sweeps and
//! optimizations with a chosen backend, and CSV reports.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::spectral_abscissa;
use crate::ek::EkOptions;
use crate::gcrodr::GcroDrOptions;
use crate::multiagent::{
    assemble_network, cartesian, desk_axis, grid_axis, grid_laplacian, laplacian_alg2, laplacian_from_edges, pair_axis, ring_laplacian, single_agent_axis,
    AgentSet, Disturbance, Family, H2Evaluator, NetworkModel, SweepSpec, PAIR_KSET_TEXT,
};
use crate::optim::NelderMeadOptions;
use crate::smw::SmwOptions;
use crate::vibration::{build_vib_model, optimize_with, reference_positions, Backend, EnergyEvaluator, RefCase, SolverSettings, VibSpec};
use crate::{LyapError, ParamLyapProblem, RMat, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Vibration,
    Multiagent,
    Synthetic,
}

impl std::str::FromStr for ProblemKind {
    type Err = LyapError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vibration" => Ok(ProblemKind::Vibration),
            "multiagent" => Ok(ProblemKind::Multiagent),
            "synthetic" => Ok(ProblemKind::Synthetic),
            _ => Err(LyapError::Config(format!("problem: unknown kind {s:?} (vibration, multiagent, synthetic)"))),
        }
    }
}

/// `oracle` is the dense solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendName {
    Smw,
    Ek,
    Oracle,
}

impl BackendName {
    pub fn backend(self) -> Backend {
        match self {
            BackendName::Smw => Backend::Smw,
            BackendName::Ek => Backend::Ek,
            BackendName::Oracle => Backend::Dense,
        }
    }
}

impl std::str::FromStr for BackendName {
    type Err = LyapError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smw" => Ok(BackendName::Smw),
            "ek" => Ok(BackendName::Ek),
            "oracle" | "dense" => Ok(BackendName::Oracle),
            _ => Err(LyapError::Config(format!("backend: unknown backend {s:?} (smw, ek, oracle)"))),
        }
    }
}

/// Solver knobs; unset values take the defaults of the problem kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_gcrodr: Option<f64>,
    pub maxit: Option<usize>,
    pub recycle: Option<usize>,
    pub restart: Option<usize>,
    pub pbar: Option<usize>,
    pub eps: Option<f64>,
    pub mmax: Option<usize>,
}

impl SolverConfig {
    /// Vibration: GCRO-DR tolerance 1e-10, 300 iterations, 10 recycled
    /// vectors, rank 50, `eps = 1e-8`, `m_max = 120`. Multi-agent: tolerance
    /// 1e-8, rank 5, `eps = 1e-10`, `m_max = 200`.
    pub fn settings(&self, kind: ProblemKind) -> SolverSettings {
        let (tol, pbar, eps, mmax) = match kind {
            ProblemKind::Multiagent => (1e-8, 5, 1e-10, 200),
            _ => (1e-10, 50, 1e-8, 120),
        };
        let gcrodr = GcroDrOptions {
            tol: self.tol_gcrodr.unwrap_or(tol),
            maxit: self.maxit.unwrap_or(300),
            restart: self.restart.unwrap_or(80),
            recycle: self.recycle.unwrap_or(10),
        };
        let smw = SmwOptions { pbar: self.pbar.unwrap_or(pbar), gcrodr, ..Default::default() };
        let ek = EkOptions { eps: self.eps.unwrap_or(eps), m_max: self.mmax.unwrap_or(mmax), smw: smw.clone(), ..Default::default() };
        SolverSettings { smw, ek }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VibrationConfig {
    pub d: usize,
    pub s: usize,
    pub alpha: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// A single damper configuration; overrides `positions` and `case`.
    pub i1: Option<usize>,
    pub i2: Option<usize>,
    /// Explicit list of `[i1, i2]` configurations.
    pub positions: Option<Vec<[usize; 2]>>,
    /// Reference configurations rescaled to `d` (`small` or `large`);
    /// used when neither `i1/i2` nor `positions` is given.
    pub case: String,
    pub v0: Vec<f64>,
    /// Nelder-Mead tolerance on both the simplex size and the values.
    pub tol: f64,
}

impl Default for VibrationConfig {
    fn default() -> Self {
        VibrationConfig {
            d: 40,
            s: 5,
            alpha: 0.04,
            k1: 40.0,
            k2: 20.0,
            k3: 30.0,
            i1: None,
            i2: None,
            positions: None,
            case: "small".into(),
            v0: vec![100.0; 3],
            tol: 1e-4,
        }
    }
}

impl VibrationConfig {
    pub fn positions(&self) -> Result<Vec<(usize, usize)>> {
        if let (Some(i1), Some(i2)) = (self.i1, self.i2) {
            return Ok(vec![(i1, i2)]);
        }
        if self.i1.is_some() != self.i2.is_some() {
            return Err(LyapError::Config("vibration.i1/i2: give both or neither".into()));
        }
        if let Some(p) = &self.positions {
            return Ok(p.iter().map(|x| (x[0], x[1])).collect());
        }
        let case = match self.case.as_str() {
            "small" => RefCase::Small,
            "large" => RefCase::Large,
            c => return Err(LyapError::Config(format!("vibration.case: unknown case {c:?} (small, large)"))),
        };
        let (a, b) = reference_positions(case, self.d);
        Ok(a.iter().flat_map(|&i1| b.iter().map(move |&i2| (i1, i2))).collect())
    }

    fn spec(&self, i1: usize, i2: usize) -> VibSpec {
        VibSpec { d: self.d, k1: self.k1, k2: self.k2, k3: self.k3, alpha: self.alpha, s: self.s, i1, i2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiagentConfig {
    pub m: usize,
    /// `single` (three parameters on one agent) or `pair` (two parameters
    /// on two consecutive agents).
    pub family: String,
    /// Defaults to every agent (`single`) or 61, 141, 221, 301 (`pair`).
    pub kset: Option<Vec<usize>>,
    /// `desk`, `full`, or an axis `start:step:stop` used for every parameter.
    pub grid: String,
    /// `grid` (square grid graph), `ring`, `alg2`, or a path to an edge list.
    pub topology: String,
    /// `perturbed` (E selects the modified agents) or `all` (E = I).
    /// Defaults to `perturbed` for `single` and `all` for `pair`.
    pub disturbance: Option<String>,
}

impl Default for MultiagentConfig {
    fn default() -> Self {
        MultiagentConfig { m: 16, family: "single".into(), kset: None, grid: "desk".into(), topology: "ring".into(), disturbance: None }
    }
}

impl MultiagentConfig {
    pub fn family(&self) -> Result<Family> {
        match self.family.as_str() {
            "single" => Ok(Family::SingleAgent),
            "pair" => Ok(Family::Pair),
            f => Err(LyapError::Config(format!("multiagent.family: unknown family {f:?} (single, pair)"))),
        }
    }

    pub fn disturbance(&self) -> Result<Disturbance> {
        match (self.disturbance.as_deref(), self.family()?) {
            (Some("perturbed"), _) | (None, Family::SingleAgent) => Ok(Disturbance::Perturbed),
            (Some("all"), _) | (None, Family::Pair) => Ok(Disturbance::All),
            (Some(d), _) => Err(LyapError::Config(format!("multiagent.disturbance: unknown value {d:?} (perturbed, all)"))),
        }
    }

    pub fn kset(&self) -> Result<Vec<usize>> {
        Ok(match (&self.kset, self.family()?) {
            (Some(k), _) => k.clone(),
            (None, Family::SingleAgent) => (1..=self.m).collect(),
            (None, Family::Pair) => PAIR_KSET_TEXT.to_vec(),
        })
    }

    pub fn axis(&self) -> Result<Vec<f64>> {
        let family = self.family()?;
        match self.grid.as_str() {
            "full" => Ok(match family {
                Family::SingleAgent => single_agent_axis(),
                Family::Pair => pair_axis(),
            }),
            "desk" => Ok(match family {
                Family::SingleAgent => desk_axis(),
                Family::Pair => pair_axis().into_iter().step_by(8).collect(),
            }),
            spec => parse_axis(spec),
        }
    }

    pub fn grid(&self) -> Result<Vec<Vec<f64>>> {
        let axis = self.axis()?;
        let dims = match self.family()? {
            Family::SingleAgent => 3,
            Family::Pair => 2,
        };
        Ok(cartesian(&vec![axis; dims]))
    }

    pub fn laplacian(&self) -> Result<RMat> {
        let m = self.m;
        match self.topology.as_str() {
            "ring" => ring_laplacian(m),
            "alg2" => laplacian_alg2(m),
            "grid" => {
                let r = (m as f64).sqrt().round() as usize;
                if r * r != m {
                    return Err(LyapError::Config(format!("multiagent.topology: grid needs a square agent count, got {m}")));
                }
                grid_laplacian(r, r)
            }
            path => read_edge_list(Path::new(path), m),
        }
    }

    pub fn network(&self) -> Result<NetworkModel> {
        assemble_network(&self.laplacian()?, &AgentSet::example(self.m))
    }
}

/// `start:step:stop`.
pub fn parse_axis(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| LyapError::Config(format!("multiagent.grid: cannot parse {s:?} (desk, full, start:step:stop)")))?;
    match parts[..] {
        [a, h, b] if h > 0.0 && b >= a => Ok(grid_axis(a, b, h)),
        _ => Err(LyapError::Config(format!("multiagent.grid: {s:?} is not an increasing start:step:stop"))),
    }
}

/// Whitespace separated one-based node pairs, one edge per line; `#` starts
/// a comment.
pub fn read_edge_list(path: &Path, m: usize) -> Result<RMat> {
    let text = std::fs::read_to_string(path).map_err(|e| LyapError::Config(format!("multiagent.topology: cannot read {}: {e}", path.display())))?;
    let mut edges = vec![];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let ids: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| LyapError::Config(format!("multiagent.topology: {}:{}: expected two node indices", path.display(), lineno + 1)))?;
        match ids[..] {
            [i, j] => edges.push((i, j)),
            _ => return Err(LyapError::Config(format!("multiagent.topology: {}:{}: expected two node indices", path.display(), lineno + 1))),
        }
    }
    laplacian_from_edges(m, &edges)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    pub k: usize,
    /// Number of random problems.
    pub problems: usize,
    /// Parameters drawn per problem.
    pub samples: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { n: 60, k: 2, problems: 3, samples: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub backend: BackendName,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub solver: SolverConfig,
    pub vibration: VibrationConfig,
    pub multiagent: MultiagentConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemKind::Synthetic,
            backend: BackendName::Smw,
            seed: 0,
            out: None,
            threads: None,
            solver: SolverConfig::default(),
            vibration: VibrationConfig::default(),
            multiagent: MultiagentConfig::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LyapError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LyapError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Check every field used by the selected problem. All problems found
    /// are reported together.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = vec![];
        let mut push = |r: Result<()>| {
            if let Err(e) = r {
                errs.push(match e {
                    LyapError::Config(s) => s,
                    other => other.to_string(),
                });
            }
        };
        let s = &self.solver;
        if s.tol_gcrodr.is_some_and(|t| !(t > 0.0)) {
            push(Err(LyapError::Config("solver.tol_gcrodr must be positive".into())));
        }
        if s.eps.is_some_and(|t| !(t > 0.0)) {
            push(Err(LyapError::Config("solver.eps must be positive".into())));
        }
        if s.maxit == Some(0) || s.mmax == Some(0) {
            push(Err(LyapError::Config("solver.maxit and solver.mmax must be positive".into())));
        }
        let st = self.solver.settings(self.problem);
        if st.smw.gcrodr.recycle >= st.smw.gcrodr.restart {
            push(Err(LyapError::Config(format!("solver.recycle ({}) must be below solver.restart ({})", st.smw.gcrodr.recycle, st.smw.gcrodr.restart))));
        }
        if self.threads == Some(0) {
            push(Err(LyapError::Config("threads must be positive".into())));
        }
        match self.problem {
            ProblemKind::Vibration => {
                let c = &self.vibration;
                if c.v0.len() != 3 {
                    push(Err(LyapError::Config(format!("vibration.v0 needs 3 values, got {}", c.v0.len()))));
                }
                if !(c.tol > 0.0) {
                    push(Err(LyapError::Config("vibration.tol must be positive".into())));
                }
                match c.positions() {
                    Ok(p) => {
                        for (i1, i2) in p {
                            push(c.spec(i1, i2).validate().map_err(|e| {
                                LyapError::Config(match e {
                                    LyapError::IndivisibleSize { .. } => format!("vibration.d: {e}"),
                                    LyapError::IndexOutOfRange(_) => format!("vibration.i1/i2 ({i1}, {i2}): {e}"),
                                    e => format!("vibration: {e}"),
                                })
                            }));
                        }
                    }
                    Err(e) => push(Err(e)),
                }
            }
            ProblemKind::Multiagent => {
                let c = &self.multiagent;
                push(c.laplacian().map(|_| ()).map_err(|e| match e {
                    LyapError::Config(s) => LyapError::Config(s),
                    e => LyapError::Config(format!("multiagent.topology: {e}")),
                }));
                match (c.family(), c.kset()) {
                    (Ok(f), Ok(ks)) => {
                        for k in ks {
                            push(f.perturbation(k, c.m, 2).map(|_| ()).map_err(|e| LyapError::Config(format!("multiagent.kset: {e}"))));
                        }
                    }
                    (Err(e), _) | (_, Err(e)) => push(Err(e)),
                }
                push(c.disturbance().map(|_| ()));
                match c.axis() {
                    Ok(a) if a.contains(&0.0) => push(Err(LyapError::Config("multiagent.grid contains zero".into()))),
                    Ok(_) => {}
                    Err(e) => push(Err(e)),
                }
            }
            ProblemKind::Synthetic => {
                let c = &self.synthetic;
                if c.n == 0 || c.k == 0 || c.k > c.n {
                    push(Err(LyapError::Config(format!("synthetic.n/k: need 1 <= k <= n, got n = {}, k = {}", c.n, c.k))));
                }
                if c.problems == 0 || c.samples == 0 {
                    push(Err(LyapError::Config("synthetic.problems and synthetic.samples must be positive".into())));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        errs.retain(|e| seen.insert(e.clone()));
        if errs.is_empty() {
            Ok(())
        } else {
            Err(LyapError::Config(errs.join("; ")))
        }
    }
}

/// One CSV row of `run`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub problem_id: String,
    /// Semicolon separated.
    pub v: String,
    pub f_value: Option<f64>,
    pub backward_error: Option<f64>,
    pub inner_iters: usize,
    pub basis_dim: usize,
    pub expansions: usize,
    pub stable: bool,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub rows: Vec<RunRow>,
    /// Some entries are unstable or failed.
    pub partial: bool,
    pub summary: Vec<String>,
}

pub fn join_v(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

pub fn split_v(s: &str) -> Result<Vec<f64>> {
    s.split(';').map(|t| t.parse::<f64>().map_err(|_| LyapError::Config(format!("bad parameter list {s:?}")))).collect()
}

/// Random stable problem: `A0` has a negative definite symmetric part,
/// `Bl`, `Br` are scaled so that moderate parameters keep `A(v)` stable.
pub fn synthetic_problem(n: usize, k: usize, rng: &mut impl Rng) -> Result<ParamLyapProblem> {
    let mut mat = |r: usize, c: usize| RMat::from_fn(r, c, |_, _| rng.random::<f64>() - 0.5);
    let g = mat(n, n);
    let s = mat(n, n);
    let a0 = -(&g * g.transpose()) / (n as f64) - RMat::identity(n, n) + (&s - s.transpose()) * 0.5;
    let sc = 2.0 / (n as f64).sqrt();
    let bl = mat(n, k) * sc;
    let br = mat(n, k) * sc;
    let c = mat(n, 2);
    let q = &c * c.transpose() + RMat::identity(n, n) * 0.1;
    ParamLyapProblem::new(a0, bl, br, q)
}

pub fn synthetic_params(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..k).map(|_| 0.05 + 0.25 * rng.random::<f64>()).collect()
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| LyapError::Config(format!("threads: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Execute the configured experiment.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    with_threads(cfg.threads, || match cfg.problem {
        ProblemKind::Vibration => run_vibration(cfg),
        ProblemKind::Multiagent => run_multiagent(cfg),
        ProblemKind::Synthetic => run_synthetic(cfg),
    })?
}

fn run_vibration(cfg: &RunConfig) -> Result<RunReport> {
    let c = &cfg.vibration;
    let settings = cfg.solver.settings(ProblemKind::Vibration);
    let nm = NelderMeadOptions::with_tol(c.tol);
    let mut rows = vec![];
    let mut partial = false;
    let mut summary = vec![];
    for (i1, i2) in c.positions()? {
        let start = Instant::now();
        let model = build_vib_model(&c.spec(i1, i2))?;
        let id = format!("vibration-d{}-s{}-i{i1}-{i2}", c.d, c.s);
        let mut eval = EnergyEvaluator::new(&model.problem(), cfg.backend.backend(), &settings)?;
        let res = optimize_with(&mut eval, &c.v0, &nm);
        let last = eval.history.last();
        let row = match res {
            Ok(opt) => {
                let stable = spectral_abscissa(&model.a_of(&opt.v)).map(|a| a < 0.0).unwrap_or(false);
                partial |= !stable;
                summary.push(format!("{id}: v* = [{}], energy {:.10e}, {} evaluations", join_v(&opt.v), opt.energy, opt.evals));
                RunRow {
                    problem_id: id,
                    v: join_v(&opt.v),
                    f_value: Some(opt.energy),
                    backward_error: last.map(|r| r.backward_error),
                    inner_iters: eval.total_inner_iters(),
                    basis_dim: last.map_or(0, |r| r.basis_dim),
                    expansions: eval.total_expansions(),
                    stable,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                }
            }
            Err(e) => {
                partial = true;
                summary.push(format!("{id}: {e}"));
                RunRow {
                    problem_id: id,
                    v: last.map_or(String::new(), |r| join_v(&r.v)),
                    f_value: None,
                    backward_error: None,
                    inner_iters: eval.total_inner_iters(),
                    basis_dim: last.map_or(0, |r| r.basis_dim),
                    expansions: eval.total_expansions(),
                    stable: false,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                }
            }
        };
        rows.push(row);
    }
    Ok(RunReport { rows, partial, summary })
}

fn sweep_spec(c: &MultiagentConfig) -> Result<SweepSpec> {
    Ok(SweepSpec { family: c.family()?, kset: c.kset()?, grid: c.grid()?, disturbance: c.disturbance()?, output_agents: None })
}

fn run_multiagent(cfg: &RunConfig) -> Result<RunReport> {
    let c = &cfg.multiagent;
    let net = c.network()?;
    let spec = sweep_spec(c)?;
    let settings = cfg.solver.settings(ProblemKind::Multiagent);
    let sweep = crate::multiagent::sweep_grid(&net, &spec, cfg.backend.backend(), &settings)?;
    let rows = sweep
        .cells
        .iter()
        .map(|cell| RunRow {
            problem_id: format!("multiagent-{}-m{}-k{}", c.family, c.m, cell.k),
            v: join_v(&cell.v),
            f_value: cell.record.as_ref().map(|r| r.h2_sq),
            backward_error: cell.record.as_ref().map(|r| r.backward_error),
            inner_iters: cell.record.as_ref().map_or(0, |r| r.inner_iters),
            basis_dim: cell.record.as_ref().map_or(0, |r| r.basis_dim),
            expansions: cell.record.as_ref().map_or(0, |r| r.expansions),
            stable: cell.stable,
            wall_ms: cell.wall_ms,
        })
        .collect();
    let mut summary = vec![format!("{} configurations: {} stable, {} unstable, {} failed", sweep.cells.len(), sweep.stable, sweep.unstable, sweep.failed)];
    for mx in &sweep.maxima {
        summary.push(format!("k = {}: max trace(E E^T X) = {:.10e} at v = [{}]", mx.k, mx.h2_sq, join_v(&mx.v)));
    }
    Ok(RunReport { rows, partial: sweep.unstable > 0 || sweep.failed > 0, summary })
}

/// The synthetic problems and parameters drawn from `seed`.
pub fn synthetic_instances(c: &SyntheticConfig, seed: u64) -> Result<Vec<(ParamLyapProblem, Vec<Vec<f64>>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..c.problems)
        .map(|_| {
            let pb = synthetic_problem(c.n, c.k, &mut rng)?;
            let vs = (0..c.samples).map(|_| synthetic_params(c.k, &mut rng)).collect();
            Ok((pb, vs))
        })
        .collect()
}

fn run_synthetic(cfg: &RunConfig) -> Result<RunReport> {
    let c = &cfg.synthetic;
    let settings = cfg.solver.settings(ProblemKind::Synthetic);
    let mut rows = vec![];
    let mut partial = false;
    for (p, (pb, vs)) in synthetic_instances(c, cfg.seed)?.into_iter().enumerate() {
        let id = format!("synthetic-n{}-k{}-p{p}", c.n, c.k);
        let mut eval = EnergyEvaluator::new(&pb, cfg.backend.backend(), &settings)?;
        for v in vs {
            let start = Instant::now();
            let stable = spectral_abscissa(&pb.a_of(&v))? < 0.0;
            let (f, rec) = match eval.energy(&v) {
                Ok(f) => (Some(f), eval.history.last().cloned()),
                Err(e) => {
                    log::warn!("{id}: {e}");
                    (None, None)
                }
            };
            partial |= f.is_none() || !stable;
            rows.push(RunRow {
                problem_id: id.clone(),
                v: join_v(&v),
                f_value: f,
                backward_error: rec.as_ref().map(|r| r.backward_error),
                inner_iters: rec.as_ref().map_or(0, |r| r.inner_iters),
                basis_dim: rec.as_ref().map_or(0, |r| r.basis_dim),
                expansions: rec.as_ref().map_or(0, |r| r.expansions),
                stable,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
    }
    let summary = vec![format!("{} evaluations", rows.len())];
    Ok(RunReport { rows, partial, summary })
}

/// Relative error of one backend against the oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub problem_id: String,
    pub v: String,
    pub backend: String,
    pub f_oracle: Option<f64>,
    pub f_backend: Option<f64>,
    pub rel_error: Option<f64>,
    /// Relative error of the optimal parameters (optimization runs only).
    pub v_rel_error: Option<f64>,
    pub oracle_ms: f64,
    pub backend_ms: f64,
    /// `oracle_ms / backend_ms`; hardware dependent.
    pub speedup: f64,
}

#[derive(Clone, Debug)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub partial: bool,
    pub max_rel_error: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

fn vrel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Run the configured backend and the dense oracle on the same inputs and
/// report relative errors against the oracle.
pub fn compare_backends(cfg: &RunConfig) -> Result<CompareReport> {
    cfg.validate()?;
    let mut oracle_cfg = cfg.clone();
    oracle_cfg.backend = BackendName::Oracle;
    let name = format!("{:?}", cfg.backend).to_lowercase();
    let rows = with_threads(cfg.threads, || -> Result<Vec<CompareRow>> {
        match cfg.problem {
            ProblemKind::Vibration => {
                let a = run_vibration(cfg)?;
                let o = run_vibration(&oracle_cfg)?;
                Ok(a.rows
                    .iter()
                    .zip(&o.rows)
                    .map(|(a, o)| {
                        let v_rel = match (split_v(&a.v), split_v(&o.v)) {
                            (Ok(x), Ok(y)) if !a.v.is_empty() && !o.v.is_empty() => Some(vrel(&x, &y)),
                            _ => None,
                        };
                        CompareRow {
                            problem_id: a.problem_id.clone(),
                            v: a.v.clone(),
                            backend: name.clone(),
                            f_oracle: o.f_value,
                            f_backend: a.f_value,
                            rel_error: a.f_value.zip(o.f_value).map(|(x, y)| rel(x, y)),
                            v_rel_error: v_rel,
                            oracle_ms: o.wall_ms,
                            backend_ms: a.wall_ms,
                            speedup: o.wall_ms / a.wall_ms,
                        }
                    })
                    .collect())
            }
            ProblemKind::Multiagent => {
                let c = &cfg.multiagent;
                let net = c.network()?;
                let spec = sweep_spec(c)?;
                let settings = cfg.solver.settings(ProblemKind::Multiagent);
                let mut rows = vec![];
                for &k in &spec.kset {
                    let pert = spec.family.perturbation(k, c.m, 2)?;
                    let e = match spec.disturbance {
                        Disturbance::All => RMat::identity(net.n(), net.n()),
                        Disturbance::Perturbed => crate::multiagent::disturbance_matrix(&pert.agents(), c.m, 2)?,
                    };
                    let t0 = Instant::now();
                    let mut ev = H2Evaluator::new(&net, &pert, &e, None, cfg.backend.backend(), &settings)?;
                    let setup_ms = t0.elapsed().as_secs_f64() * 1e3;
                    let oracle = H2Evaluator::new(&net, &pert, &e, None, Backend::Dense, &settings)?;
                    let mut first = true;
                    for v in &spec.grid {
                        if !ev.is_stable(v)? {
                            continue;
                        }
                        let t = Instant::now();
                        let fb = ev.evaluate(v).ok().map(|r| r.h2_sq);
                        let mut backend_ms = t.elapsed().as_secs_f64() * 1e3;
                        if first {
                            backend_ms += setup_ms;
                            first = false;
                        }
                        let t = Instant::now();
                        let fo = oracle.evaluate_dense(v).ok().map(|r| r.h2_sq);
                        let oracle_ms = t.elapsed().as_secs_f64() * 1e3;
                        rows.push(CompareRow {
                            problem_id: format!("multiagent-{}-m{}-k{k}", c.family, c.m),
                            v: join_v(v),
                            backend: name.clone(),
                            f_oracle: fo,
                            f_backend: fb,
                            rel_error: fb.zip(fo).map(|(x, y)| rel(x, y)),
                            v_rel_error: None,
                            oracle_ms,
                            backend_ms,
                            speedup: oracle_ms / backend_ms,
                        });
                    }
                }
                Ok(rows)
            }
            ProblemKind::Synthetic => {
                let a = run_synthetic(cfg)?;
                let o = run_synthetic(&oracle_cfg)?;
                Ok(a.rows
                    .iter()
                    .zip(&o.rows)
                    .map(|(a, o)| CompareRow {
                        problem_id: a.problem_id.clone(),
                        v: a.v.clone(),
                        backend: name.clone(),
                        f_oracle: o.f_value,
                        f_backend: a.f_value,
                        rel_error: a.f_value.zip(o.f_value).map(|(x, y)| rel(x, y)),
                        v_rel_error: None,
                        oracle_ms: o.wall_ms,
                        backend_ms: a.wall_ms,
                        speedup: o.wall_ms / a.wall_ms,
                    })
                    .collect())
            }
        }
    })??;
    let partial = rows.iter().any(|r| r.rel_error.is_none());
    let max_rel_error = rows.iter().filter_map(|r| r.rel_error).fold(0.0, f64::max);
    Ok(CompareReport { rows, partial, max_rel_error })
}

/// Write rows with a header line.
pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| LyapError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_run_csv(input: impl std::io::Read) -> Result<Vec<RunRow>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(|e| LyapError::Io(e.to_string()))).collect()
}

/// Write to `path`, or standard output when `None`.
pub fn write_csv_to<T: Serialize>(rows: &[T], path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => write_csv(rows, std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => write_csv(rows, std::io::stdout().lock()),
    }
}
