//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver event, 3 a
//! theorem check came out `Inconsistent`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiles::{linspace, FProfile, ProblemSpec, Warp};
use crate::shooting::{self, ShootError, DEFAULT_MATCH_TOL};
use crate::solver::{self, SolveError, SolverConfig, Termination, Trajectory};
use crate::theorems::{self, Catalog, TheoremId, Verdict};
use crate::variational::{self, DiscreteProblem};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_INCONSISTENT: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl From<SolveError> for CliError {
    fn from(err: SolveError) -> CliError {
        match err {
            SolveError::InvalidSpec(_) | SolveError::InvalidConfig(_) => config_err(err.to_string()),
            _ => CliError::Solver(err.to_string()),
        }
    }
}

impl From<ShootError> for CliError {
    fn from(err: ShootError) -> CliError {
        match err {
            ShootError::InvalidInput(_) => config_err(err.to_string()),
            ShootError::Solve(inner) => inner.into(),
            _ => CliError::Solver(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub c_min: f64,
    pub c_max: f64,
    pub count: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            c_min: 0.5,
            c_max: 1.5,
            count: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootConfig {
    /// Defaults to `r_max`.
    pub r0: Option<f64>,
    pub target: Option<f64>,
    pub match_tol: f64,
}

impl Default for ShootConfig {
    fn default() -> Self {
        ShootConfig {
            r0: None,
            target: None,
            match_tol: DEFAULT_MATCH_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeConfig {
    pub r_a: f64,
    /// Defaults to `r_max`.
    pub r_b: Option<f64>,
    pub points: usize,
    /// Boundary values; taken from the forward solution when absent.
    pub alpha_a: Option<f64>,
    pub alpha_b: Option<f64>,
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        MinimizeConfig {
            r_a: 0.5,
            r_b: None,
            points: 512,
            alpha_a: None,
            alpha_b: None,
            grad_tol: 1e-10,
            max_iters: 10_000,
        }
    }
}

/// Everything a run needs; loaded from JSON and overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub n: u32,
    pub profile: String,
    pub warp_f: String,
    pub warp_g: String,
    pub c: f64,
    pub r_max: f64,
    pub solver: SolverConfig,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub sweep: SweepConfig,
    pub shoot: ShootConfig,
    pub minimize: MinimizeConfig,
    /// Theorem ids to verify; empty means all.
    pub checkers: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            n: 2,
            profile: "harmonic".into(),
            warp_f: "hyperbolic".into(),
            warp_g: "hyperbolic".into(),
            c: 1.0,
            r_max: 10.0,
            solver: SolverConfig::default(),
            out: PathBuf::from("."),
            workers: None,
            sweep: SweepConfig::default(),
            shoot: ShootConfig::default(),
            minimize: MinimizeConfig::default(),
            checkers: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Resolves names and builds the problem specification.
    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        let profile = FProfile::from_name(&self.profile)
            .map_err(|e| config_err(format!("profile: {e}")))?;
        let f = Warp::from_name(&self.warp_f).map_err(|e| config_err(format!("warp_f: {e}")))?;
        let g = Warp::from_name(&self.warp_g).map_err(|e| config_err(format!("warp_g: {e}")))?;
        if self.n == 0 {
            return Err(config_err("n: must be >= 1"));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(config_err(format!("c: must be finite and >= 0, got {}", self.c)));
        }
        if !(self.r_max > self.solver.eps_start && self.r_max.is_finite()) {
            return Err(config_err(format!("r_max: must exceed eps_start, got {}", self.r_max)));
        }
        self.solver
            .check()
            .map_err(|e| config_err(format!("solver: {e}")))?;
        Ok(ProblemSpec::new(self.n, profile, f, g)
            .with_slope(self.c)
            .with_horizon(self.r_max)
            .with_solver(self.solver))
    }
}

#[derive(Debug, Parser)]
#[command(name = "fharmonic", version, about = "Rotationally symmetric F-harmonic maps between model manifolds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub n: Option<u32>,
    /// harmonic, exp or p:<p>.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// euclidean, hyperbolic or tanh.
    #[arg(long = "warp-f", global = true)]
    pub warp_f: Option<String>,
    #[arg(long = "warp-g", global = true)]
    pub warp_g: Option<String>,
    /// Initial slope.
    #[arg(long, global = true)]
    pub c: Option<f64>,
    #[arg(long = "r-max", global = true)]
    pub r_max: Option<f64>,
    #[arg(long, global = true, env = "FHARMONIC_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and write it as CSV.
    Solve,
    /// Integrate a range of slopes and write one summary row per slope.
    Sweep {
        #[arg(long = "c-min")]
        c_min: Option<f64>,
        #[arg(long = "c-max")]
        c_max: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Find the slope whose solution reaches a target value at R0.
    Shoot {
        #[arg(long)]
        r0: Option<f64>,
        #[arg(long)]
        target: Option<f64>,
        #[arg(long = "match-tol")]
        match_tol: Option<f64>,
    },
    /// Minimize the discrete energy with Dirichlet data.
    Minimize {
        #[arg(long = "r-a")]
        r_a: Option<f64>,
        #[arg(long = "r-b")]
        r_b: Option<f64>,
        /// Interior grid points.
        #[arg(long)]
        points: Option<usize>,
        #[arg(long = "alpha-a")]
        alpha_a: Option<f64>,
        #[arg(long = "alpha-b")]
        alpha_b: Option<f64>,
    },
    /// Run the theorem checks and write a JSON report.
    Verify {
        /// Comma-separated theorem ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        checkers: Option<Vec<String>>,
        /// Matching tolerance for the uniqueness checks.
        #[arg(long = "match-tol")]
        match_tol: Option<f64>,
    },
}

impl Cli {
    /// Loads the config file, if any, and applies flag overrides.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.common.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let c = &self.common;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(cfg.out, c.out);
        set!(cfg.n, c.n);
        set!(cfg.profile, c.profile);
        set!(cfg.warp_f, c.warp_f);
        set!(cfg.warp_g, c.warp_g);
        set!(cfg.c, c.c);
        set!(cfg.r_max, c.r_max);
        if c.workers.is_some() {
            cfg.workers = c.workers;
        }
        match &self.command {
            Command::Solve => {}
            Command::Sweep { c_min, c_max, count } => {
                set!(cfg.sweep.c_min, c_min);
                set!(cfg.sweep.c_max, c_max);
                set!(cfg.sweep.count, count);
            }
            Command::Shoot { r0, target, match_tol } => {
                if r0.is_some() {
                    cfg.shoot.r0 = *r0;
                }
                if target.is_some() {
                    cfg.shoot.target = *target;
                }
                set!(cfg.shoot.match_tol, match_tol);
            }
            Command::Minimize { r_a, r_b, points, alpha_a, alpha_b } => {
                set!(cfg.minimize.r_a, r_a);
                if r_b.is_some() {
                    cfg.minimize.r_b = *r_b;
                }
                set!(cfg.minimize.points, points);
                if alpha_a.is_some() {
                    cfg.minimize.alpha_a = *alpha_a;
                }
                if alpha_b.is_some() {
                    cfg.minimize.alpha_b = *alpha_b;
                }
            }
            Command::Verify { checkers, match_tol } => {
                set!(cfg.checkers, checkers);
                if let Some(t) = match_tol {
                    cfg.shoot.match_tol = *t;
                }
            }
        }
        Ok(cfg)
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let cfg = cli.resolve()?;
    let spec = cfg.problem()?;
    fs::create_dir_all(&cfg.out)
        .map_err(|e| config_err(format!("out: cannot create {}: {e}", cfg.out.display())))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        if w == 0 {
            return Err(config_err("workers: must be >= 1"));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| config_err(format!("workers: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Solve => cmd_solve(&cfg, &spec),
        Command::Sweep { .. } => cmd_sweep(&cfg, &spec),
        Command::Shoot { .. } => cmd_shoot(&cfg, &spec),
        Command::Minimize { .. } => cmd_minimize(&cfg, &spec),
        Command::Verify { .. } => cmd_verify(&cfg),
    })
}

/// Seventeen significant digits, locale independent.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| config_err(format!("out: cannot write {}: {e}", path.display())))?;
    Ok(path)
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::from("r,alpha,alpha_prime,theta,g_theta,residual\n");
    for n in &traj.nodes {
        let row = [n.r, n.alpha, n.alpha_prime, n.theta, n.g_theta, n.residual].map(fmt_num);
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

fn cmd_solve(cfg: &RunConfig, spec: &ProblemSpec) -> Result<i32, CliError> {
    let traj = solver::solve(spec)?;
    let path = write_out(&cfg.out, "trajectory.csv", &trajectory_csv(&traj))?;
    println!(
        "status {} at r = {} ({} nodes) -> {}",
        traj.termination,
        traj.r_end(),
        traj.nodes.len(),
        path.display()
    );
    Ok(if traj.termination == Termination::ReachedHorizon {
        EXIT_OK
    } else {
        EXIT_SOLVER
    })
}

fn is_hyperbolic_pair(spec: &ProblemSpec) -> bool {
    spec.f.label() == "hyperbolic" && spec.g.label() == "hyperbolic"
}

fn cmd_sweep(cfg: &RunConfig, spec: &ProblemSpec) -> Result<i32, CliError> {
    let SweepConfig { c_min, c_max, count } = cfg.sweep;
    if count == 0 {
        return Err(config_err("sweep.count: must be >= 1"));
    }
    if !(c_min >= 0.0 && c_max >= c_min && c_max.is_finite()) {
        return Err(config_err("sweep: need 0 <= c_min <= c_max"));
    }
    let slopes = if count == 1 { vec![c_min] } else { linspace(c_min, c_max, count) };
    let classify = is_hyperbolic_pair(spec);
    let rows: Vec<Result<String, String>> = slopes
        .par_iter()
        .map(|&c| {
            let traj = solver::solve(&spec.clone().with_slope(c)).map_err(|e| e.to_string())?;
            let end = traj.last();
            let class = if classify {
                theorems::classify_hyperbolic(&traj).to_string()
            } else {
                String::new()
            };
            Ok(format!(
                "{},{},{},{},{}",
                fmt_num(c),
                fmt_num(end.alpha),
                fmt_num(end.alpha_prime),
                traj.termination,
                class
            ))
        })
        .collect();
    let mut csv = String::from("c,alpha_at_rmax,alpha_prime_at_rmax,termination,class\n");
    let mut failures = 0;
    for (c, row) in slopes.iter().zip(&rows) {
        match row {
            Ok(line) => {
                let _ = writeln!(csv, "{line}");
            }
            Err(msg) => {
                failures += 1;
                eprintln!("c = {c}: {msg}");
                let _ = writeln!(csv, "{},,,Error,", fmt_num(*c));
            }
        }
    }
    let path = write_out(&cfg.out, "sweep.csv", &csv)?;
    println!("{} rows, {failures} failed -> {}", rows.len(), path.display());
    Ok(if failures == rows.len() { EXIT_SOLVER } else { EXIT_OK })
}

#[derive(Serialize)]
struct ShootSummary<'a> {
    schema_version: u32,
    spec: String,
    r0: f64,
    target: f64,
    match_tol: f64,
    c_star: f64,
    iterations: usize,
    residual_at_target: f64,
    uniqueness_guaranteed: bool,
    bracket_history: &'a [(f64, f64)],
    termination: Termination,
}

fn cmd_shoot(cfg: &RunConfig, spec: &ProblemSpec) -> Result<i32, CliError> {
    let r0 = cfg.shoot.r0.unwrap_or(cfg.r_max);
    let target = cfg
        .shoot
        .target
        .ok_or_else(|| config_err("shoot.target: required (--target)"))?;
    let res = shooting::shoot(spec, r0, target, cfg.shoot.match_tol)?;
    write_out(&cfg.out, "shoot.csv", &trajectory_csv(&res.trajectory))?;
    let summary = ShootSummary {
        schema_version: SCHEMA_VERSION,
        spec: spec.summary(),
        r0,
        target,
        match_tol: cfg.shoot.match_tol,
        c_star: res.c_star,
        iterations: res.iterations,
        residual_at_target: res.residual_at_target,
        uniqueness_guaranteed: res.uniqueness_guaranteed,
        bracket_history: &res.bracket_history,
        termination: res.trajectory.termination,
    };
    let json = serde_json::to_string_pretty(&summary).expect("serializable summary");
    let path = write_out(&cfg.out, "shoot.json", &(json + "\n"))?;
    println!("c* = {} after {} iterations -> {}", fmt_num(res.c_star), res.iterations, path.display());
    if !res.uniqueness_guaranteed {
        eprintln!("warning: g'' < 0 sampled on the target range; the slope may not be unique");
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct MinimizeSummary {
    schema_version: u32,
    spec: String,
    r_a: f64,
    r_b: f64,
    points: usize,
    alpha_a: f64,
    alpha_b: f64,
    energy: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

fn cmd_minimize(cfg: &RunConfig, spec: &ProblemSpec) -> Result<i32, CliError> {
    let m = &cfg.minimize;
    let r_b = m.r_b.unwrap_or(cfg.r_max);
    let (alpha_a, alpha_b) = match (m.alpha_a, m.alpha_b) {
        (Some(a), Some(b)) => (a, b),
        (a, b) => {
            let traj = solver::solve(&spec.clone().with_horizon(r_b.max(spec.r_max)))?;
            let at = |r: f64| traj.dense_eval(r).map(|v| v.0);
            (a.map_or_else(|| at(m.r_a), Ok)?, b.map_or_else(|| at(r_b), Ok)?)
        }
    };
    let problem = DiscreteProblem::new(spec.clone(), (m.r_a, r_b), m.points, (alpha_a, alpha_b))
        .map_err(|e| config_err(format!("minimize: {e}")))?;
    let res = variational::minimize(&problem, &problem.linear_guess(), m.grad_tol, m.max_iters)
        .map_err(|e| config_err(format!("minimize: {e}")))?;
    let mut csv = String::from("r,alpha\n");
    let radii = [m.r_a]
        .into_iter()
        .chain(problem.nodes())
        .chain([r_b]);
    let values = [alpha_a]
        .into_iter()
        .chain(res.alpha_grid.iter().copied())
        .chain([alpha_b]);
    for (r, a) in radii.zip(values) {
        let _ = writeln!(csv, "{},{}", fmt_num(r), fmt_num(a));
    }
    write_out(&cfg.out, "minimize.csv", &csv)?;
    let summary = MinimizeSummary {
        schema_version: SCHEMA_VERSION,
        spec: spec.summary(),
        r_a: m.r_a,
        r_b,
        points: m.points,
        alpha_a,
        alpha_b,
        energy: res.energy,
        grad_norm: res.grad_norm,
        iterations: res.iterations,
        converged: res.converged,
    };
    let json = serde_json::to_string_pretty(&summary).expect("serializable summary");
    let path = write_out(&cfg.out, "minimize.json", &(json + "\n"))?;
    println!(
        "energy {} after {} iterations, converged = {} -> {}",
        fmt_num(res.energy),
        res.iterations,
        res.converged,
        path.display()
    );
    Ok(if res.converged { EXIT_OK } else { EXIT_SOLVER })
}

#[derive(Serialize)]
struct VerifyDocument<'a> {
    schema_version: u32,
    reports: &'a [theorems::VerificationReport],
}

fn cmd_verify(cfg: &RunConfig) -> Result<i32, CliError> {
    let ids = cfg
        .checkers
        .iter()
        .map(|s| s.trim().parse::<TheoremId>().map_err(|e| config_err(format!("checkers: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if !(cfg.shoot.match_tol > 0.0) {
        return Err(config_err("match_tol: must be positive"));
    }
    let mut catalog = Catalog::default_catalog().with_match_tol(cfg.shoot.match_tol);
    if !ids.is_empty() {
        catalog = catalog.only(&ids);
    }
    let mut reports = theorems::run_suite(&catalog);
    if !ids.is_empty() {
        reports.retain(|r| ids.contains(&r.theorem_id));
    }
    let doc = VerifyDocument {
        schema_version: SCHEMA_VERSION,
        reports: &reports,
    };
    let json = serde_json::to_string_pretty(&doc).expect("serializable reports");
    let path = write_out(&cfg.out, "verify.json", &(json + "\n"))?;
    let mut inconsistent = 0;
    for r in &reports {
        println!("{:<6} {}", r.theorem_id.as_str(), r.verdict);
        match r.verdict {
            Verdict::Inconsistent => inconsistent += 1,
            Verdict::Inconclusive => eprintln!("warning: {} is inconclusive", r.theorem_id),
            _ => {}
        }
    }
    println!("{} reports -> {}", reports.len(), path.display());
    Ok(if inconsistent > 0 { EXIT_INCONSISTENT } else { EXIT_OK })
}
