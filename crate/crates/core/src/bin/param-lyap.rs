use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use param_lyap::bench::{compare_backends, run, write_csv_to, BackendName, ProblemKind, RunConfig};
use param_lyap::selftest::run_selftest;
use param_lyap::LyapError;

#[derive(Parser)]
#[command(name = "param-lyap", version, about = "Sweeps and optimizations over parametrized Lyapunov equations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured sweep or optimization and write a CSV report.
    Run {
        #[command(flatten)]
        opts: Box<Opts>,
        /// Run the self-test suite instead.
        #[arg(long)]
        selftest: bool,
    },
    /// Compare a backend against the dense oracle.
    Compare {
        #[command(flatten)]
        opts: Box<Opts>,
    },
    /// Quick invariant checks of every module.
    Selftest,
}

#[derive(Args)]
struct Opts {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// vibration | multiagent | synthetic
    #[arg(long)]
    problem: Option<String>,
    /// smw | ek | oracle
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,

    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    i1: Option<usize>,
    #[arg(long)]
    i2: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    k2: Option<f64>,
    #[arg(long)]
    k3: Option<f64>,
    /// Starting viscosities, comma separated.
    #[arg(long, value_delimiter = ',')]
    v0: Option<Vec<f64>>,
    /// small | large (reference damper configurations).
    #[arg(long)]
    case: Option<String>,
    /// Optimizer tolerance.
    #[arg(long)]
    tol: Option<f64>,

    #[arg(long)]
    m: Option<usize>,
    /// single | pair
    #[arg(long)]
    family: Option<String>,
    /// Agent (single) or odd row (pair) indices, comma separated.
    #[arg(long, value_delimiter = ',')]
    kset: Option<Vec<usize>>,
    /// desk | full | start:step:stop
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// grid | ring | alg2 | path to an edge list
    #[arg(long)]
    topology: Option<String>,
    /// perturbed | all
    #[arg(long)]
    disturbance: Option<String>,

    /// Synthetic problem size.
    #[arg(long)]
    n: Option<usize>,
    /// Synthetic parameter count.
    #[arg(long)]
    params: Option<usize>,
    #[arg(long)]
    problems: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,

    #[arg(long)]
    tol_gcrodr: Option<f64>,
    #[arg(long)]
    maxit: Option<usize>,
    #[arg(long)]
    recycle: Option<usize>,
    #[arg(long)]
    restart: Option<usize>,
    #[arg(long)]
    pbar: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    mmax: Option<usize>,
}

fn set<T>(dst: &mut T, src: Option<T>) {
    if let Some(x) = src {
        *dst = x;
    }
}

impl Opts {
    fn config(self) -> Result<RunConfig, LyapError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.problem {
            c.problem = p.parse::<ProblemKind>()?;
        }
        if let Some(b) = &self.backend {
            c.backend = b.parse::<BackendName>()?;
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        set(&mut c.seed, self.seed);
        if self.threads.is_some() {
            c.threads = self.threads;
        }

        let v = &mut c.vibration;
        set(&mut v.d, self.d);
        set(&mut v.s, self.s);
        if self.i1.is_some() || self.i2.is_some() {
            v.i1 = self.i1;
            v.i2 = self.i2;
        }
        set(&mut v.alpha, self.alpha);
        set(&mut v.k1, self.k1);
        set(&mut v.k2, self.k2);
        set(&mut v.k3, self.k3);
        set(&mut v.v0, self.v0);
        set(&mut v.case, self.case);
        set(&mut v.tol, self.tol);

        let ma = &mut c.multiagent;
        set(&mut ma.m, self.m);
        set(&mut ma.family, self.family);
        if self.kset.is_some() {
            ma.kset = self.kset;
        }
        set(&mut ma.grid, self.grid);
        set(&mut ma.topology, self.topology);
        if self.disturbance.is_some() {
            ma.disturbance = self.disturbance;
        }

        let sy = &mut c.synthetic;
        set(&mut sy.n, self.n);
        set(&mut sy.k, self.params);
        set(&mut sy.problems, self.problems);
        set(&mut sy.samples, self.samples);

        let so = &mut c.solver;
        for (dst, src) in [(&mut so.tol_gcrodr, self.tol_gcrodr), (&mut so.eps, self.eps)] {
            if src.is_some() {
                *dst = src;
            }
        }
        for (dst, src) in [
            (&mut so.maxit, self.maxit),
            (&mut so.recycle, self.recycle),
            (&mut so.restart, self.restart),
            (&mut so.pbar, self.pbar),
            (&mut so.mmax, self.mmax),
        ] {
            if src.is_some() {
                *dst = src;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn selftest() -> ExitCode {
    let checks = run_selftest();
    for c in &checks {
        println!("{} {} ({}, {:.0} ms)", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail, c.wall_ms);
    }
    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn config_error(e: LyapError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Selftest | Cmd::Run { selftest: true, .. } => selftest(),
        Cmd::Run { opts, .. } => {
            let cfg = match opts.config() {
                Ok(c) => c,
                Err(e) => return config_error(e),
            };
            let report = match run(&cfg) {
                Ok(r) => r,
                Err(e) => return config_error(e),
            };
            if let Err(e) = write_csv_to(&report.rows, cfg.out.as_deref()) {
                return config_error(e);
            }
            for line in &report.summary {
                eprintln!("{line}");
            }
            if report.partial {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Cmd::Compare { opts } => {
            let cfg = match opts.config() {
                Ok(c) => c,
                Err(e) => return config_error(e),
            };
            let report = match compare_backends(&cfg) {
                Ok(r) => r,
                Err(e) => return config_error(e),
            };
            if let Err(e) = write_csv_to(&report.rows, cfg.out.as_deref()) {
                return config_error(e);
            }
            eprintln!("{} comparisons, max relative error {:.3e} (timings are hardware dependent)", report.rows.len(), report.max_rel_error);
            if report.partial {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}
