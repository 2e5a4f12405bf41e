//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use fharmonic::field::{self, State};
use fharmonic::profiles::{FProfile, ProblemSpec, Warp};
use fharmonic::solver::{self, SolverConfig, Termination};
use fharmonic::theorems::{
    self, check_decay, check_hyperbolic_boundedness, check_unique_continuation,
    classify_hyperbolic, run_entry, Catalog, HyperbolicClass, TheoremId, Verdict,
    VerificationReport,
};
use fharmonic::variational::{self, DiscreteProblem};

use common::planar;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
/// `(f, g, c, exact(c, r))`
type ClosedForm = (&'static str, &'static str, f64, fn(f64, f64) -> f64);

const PROFILES: [&str; 3] = ["harmonic", "exp", "p:4"];

fn spec(n: u32, profile: &str, f: &str, g: &str, c: f64, r_max: f64) -> ProblemSpec {
    ProblemSpec::new(
        n,
        FProfile::from_name(profile).unwrap(),
        Warp::from_name(f).unwrap(),
        Warp::from_name(g).unwrap(),
    )
    .with_slope(c)
    .with_horizon(r_max)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn entry_reports(id: TheoremId) -> Vec<VerificationReport> {
    let catalog = Catalog::default_catalog().only(&[id]);
    catalog.entries.iter().flat_map(run_entry).collect()
}

fn no_inconsistent(reps: &[VerificationReport]) -> Result<(), String> {
    for r in reps {
        ensure(r.verdict != Verdict::Inconsistent, || {
            format!("{} is Inconsistent", r.theorem_id)
        })?;
    }
    Ok(())
}

fn exact_residuals() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for p in PROFILES {
        for _ in 0..1000 {
            let n = rng.gen_range(1..=4);
            let r = rng.gen_range(0.05..10.0);
            let id = spec(n, p, "hyperbolic", "hyperbolic", 1.0, 10.0);
            let res = field::residual(&id, &State::new(r, r, 1.0), 0.0).map_err(|e| e.to_string())?;
            worst = worst.max(res.abs());
            let c = rng.gen_range(0.1..2.0);
            let lin = spec(n, p, "euclidean", "euclidean", c, 10.0);
            let res = field::residual(&lin, &State::new(r, c * r, c), 0.0).map_err(|e| e.to_string())?;
            worst = worst.max(res.abs());
        }
    }
    ensure(worst < 1e-10, || format!("max |residual| = {worst:e}"))?;
    within(start.elapsed(), 1.0)?;
    Ok(format!("max |residual| = {worst:.2e} over 6000 states"))
}

fn solver_accuracy() -> Outcome {
    let start = Instant::now();
    let halvings = |s: &ProblemSpec, exact: &dyn Fn(f64) -> f64| -> Vec<f64> {
        (0..4)
            .map(|k| {
                let cfg = SolverConfig {
                    rel_tol: 1e-9 / f64::from(1 << k),
                    ..SolverConfig::default()
                };
                let t = solver::solve(&s.clone().with_solver(cfg)).unwrap();
                t.nodes.iter().map(|nd| (nd.alpha - exact(nd.r)).abs()).fold(0.0, f64::max)
            })
            .collect()
    };
    let mut worst: f64 = 0.0;
    for p in PROFILES {
        for n in [2, 3] {
            for (w, c) in [("hyperbolic", 1.0), ("euclidean", 0.5), ("euclidean", 2.0)] {
                let errs = halvings(&spec(n, p, w, w, c, 10.0), &|r| c * r);
                let max = errs.iter().copied().fold(0.0, f64::max);
                ensure(max < 1e-8, || format!("{p} n={n} {w} c={c}: errors {errs:?}"))?;
                worst = worst.max(max);
            }
        }
    }
    // The exact solutions above are reproduced stage by stage, so their error
    // is pure rounding. Monotone improvement is checked where truncation
    // error exists.
    let closed: [ClosedForm; 3] = [
        ("hyperbolic", "hyperbolic", 0.9, planar::hyp_hyp),
        ("hyperbolic", "euclidean", 1.0, planar::hyp_euc),
        ("euclidean", "hyperbolic", 0.3, planar::euc_hyp),
    ];
    for (f, g, c, exact) in closed {
        let errs = halvings(&spec(2, "harmonic", f, g, c, 5.0), &|r| exact(c, r));
        ensure(errs.windows(2).all(|w| w[1] <= w[0]), || {
            format!("{f}->{g} c={c}: halving increased error {errs:?}")
        })?;
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "exact-solution error <= {worst:.2e} at every rel_tol; closed-form errors decrease under halving"
    ))
}

fn dual_integrators() -> Outcome {
    let start = Instant::now();
    let cases = [
        ("harmonic", "hyperbolic", "euclidean"),
        ("exp", "hyperbolic", "euclidean"),
        ("p:4", "hyperbolic", "euclidean"),
        ("harmonic", "euclidean", "hyperbolic"),
        ("exp", "euclidean", "hyperbolic"),
    ];
    let results: Vec<Result<f64, String>> = cases
        .par_iter()
        .map(|(p, f, g)| {
            let s = spec(2, p, f, g, 0.8, 2.0);
            let traj = solver::solve(&s).map_err(|e| e.to_string())?;
            if traj.termination != Termination::ReachedHorizon {
                return Err(format!("{p} {f}->{g}: {}", traj.termination));
            }
            let reference = common::rk4_reference(&s, s.solver.eps_start, s.r_max, 1e-5);
            let mut diff: f64 = 0.0;
            for &(r, a, _) in reference.iter().step_by(100) {
                let (b, _) = traj.dense_eval(r.min(traj.r_end())).map_err(|e| e.to_string())?;
                diff = diff.max((a - b).abs());
            }
            Ok(diff)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for (case, res) in cases.iter().zip(results) {
        let d = res?;
        ensure(d < 1e-6, || format!("{case:?}: max difference {d:e}"))?;
        worst = worst.max(d);
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!("max difference {worst:.2e} over 5 hybrid specs"))
}

fn chain_rule() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let pairs = [
        ("hyperbolic", "hyperbolic"),
        ("hyperbolic", "euclidean"),
        ("euclidean", "hyperbolic"),
        ("tanh", "euclidean"),
    ];
    let mut worst: f64 = 0.0;
    let mut specs = 0;
    for p in PROFILES {
        for (f, g) in pairs {
            for n in [2, 3, 5] {
                let s = spec(n, p, f, g, 1.0, 10.0);
                specs += 1;
                for _ in 0..1000 {
                    let st = State::new(
                        rng.gen_range(0.05..5.0),
                        rng.gen_range(0.0..3.0),
                        rng.gen_range(-2.0..2.0),
                    );
                    let a2 = field::alpha_second(&s, &st).map_err(|e| e.to_string())?;
                    let direct = field::theta_prime_chain(&s, &st, a2).map_err(|e| e.to_string())?;
                    let identity = field::theta_prime(&s, &st).map_err(|e| e.to_string())?;
                    let scale = direct.abs().max(identity.abs()).max(f64::MIN_POSITIVE);
                    let rel = (direct - identity).abs() / scale;
                    // States where θ' itself cancels to rounding level are
                    // measured against the size of its terms.
                    let terms = field::theta_prime_factors(&s, &st).map_err(|e| e.to_string())?.0.abs()
                        + (st.alpha_prime * a2).abs();
                    let rel = rel.min((direct - identity).abs() / terms.max(f64::MIN_POSITIVE));
                    ensure(rel < 1e-10, || format!("{} at {st:?}: relative {rel:e}", s.summary()))?;
                    worst = worst.max(rel);
                }
            }
        }
    }
    Ok(format!("max relative difference {worst:.2e} at 1000 states x {specs} specs"))
}

fn monotonicity() -> Outcome {
    let catalog = Catalog::default_catalog();
    let specs: Vec<&ProblemSpec> = catalog
        .trajectory_specs()
        .into_iter()
        .filter(|s| s.c > 0.0 && s.n >= 2)
        .collect();
    let mins: Vec<Result<f64, String>> = specs
        .par_iter()
        .map(|s| {
            let t = solver::solve(s).map_err(|e| e.to_string())?;
            Ok(t.nodes.iter().map(|n| n.alpha_prime).fold(f64::INFINITY, f64::min))
        })
        .collect();
    let mut lowest = f64::INFINITY;
    for (s, m) in specs.iter().zip(mins) {
        let m = m?;
        ensure(m > 0.0, || format!("{}: min alpha' = {m:e}", s.summary()))?;
        lowest = lowest.min(m);
    }
    ensure(specs.len() >= 30, || format!("only {} trajectories", specs.len()))?;
    let reps = entry_reports(TheoremId::L2_1);
    ensure(reps.iter().all(|r| r.verdict == Verdict::Consistent), || "L2_1 not Consistent".into())?;
    Ok(format!("{} trajectories, min alpha' = {lowest:.2e}", specs.len()))
}

fn uniqueness() -> Outcome {
    let reps = entry_reports(TheoremId::T2_15);
    ensure(reps.len() == 1, || format!("{} reports", reps.len()))?;
    let cases = &reps[0].cases;
    let mut scans = 0;
    let mut shots = 0;
    for c in cases {
        ensure(c.verdict == Verdict::Consistent, || {
            format!("{}: {} {:?} {:?}", c.spec_summary, c.verdict, c.measured, c.notes)
        })?;
        if c.measured.contains_key("crossings") {
            scans += 1;
            ensure(c.measured["crossings"] == 0.0 && c.measured["scan_points"] == 20.0, || {
                format!("{}: {:?}", c.spec_summary, c.measured)
            })?;
        } else {
            shots += 1;
            ensure(c.measured["c_gap"] <= 10.0 * 1e-10, || format!("{:?}", c.measured))?;
        }
    }
    ensure(scans >= 2 && shots >= 3, || format!("{scans} scans, {shots} shots"))?;
    Ok(format!("{scans} scans strictly increasing without crossings, {shots} two-bracket shots agree"))
}

fn trichotomy() -> Outcome {
    let mut lines = 0;
    for p in PROFILES {
        for c in [0.8, 0.9, 1.0, 1.1, 1.2] {
            let t = solver::solve(&spec(2, p, "hyperbolic", "hyperbolic", c, 10.0)).map_err(|e| e.to_string())?;
            let rep = theorems::check_trichotomy(&t);
            ensure(rep.verdict == Verdict::Consistent, || format!("{p} c={c}: {:?}", rep.measured))?;
            // At c = 1 the difference is rounding noise and its sign is meaningless.
            ensure(c == 1.0 || rep.measured["sign_changes"] == 0.0, || format!("{p} c={c}: sign changes"))?;
            let zero = rep.measured["identically_zero"] == 1.0;
            ensure(zero == (c == 1.0), || format!("{p} c={c}: identically_zero = {zero}"))?;
            let devs = t.nodes.iter().map(|n| n.alpha - n.r);
            let ok = match c {
                c if c < 1.0 => devs.clone().all(|d| d < 0.0),
                c if c > 1.0 => devs.clone().all(|d| d > 0.0),
                _ => true,
            };
            ensure(ok, || format!("{p} c={c}: wrong side of the identity"))?;
            lines += 1;
        }
    }
    Ok(format!("{lines} trajectories, constant sign, zero only at c = 1"))
}

fn decay() -> Outcome {
    let mut details = Vec::new();
    for p in ["harmonic", "exp"] {
        let start = Instant::now();
        let t = solver::solve(&spec(2, p, "hyperbolic", "euclidean", 1.0, 20.0)).map_err(|e| e.to_string())?;
        let reps = check_decay(&t, 0.1);
        let slope = reps[0].measured.get("slope").copied().unwrap_or(f64::NAN);
        ensure(reps[0].verdict == Verdict::Consistent && slope <= -0.85, || {
            format!("{p}: slope {slope} verdict {}", reps[0].verdict)
        })?;
        let (a10, _) = t.dense_eval(10.0).map_err(|e| e.to_string())?;
        let growth = t.last().alpha - a10;
        ensure(growth < 0.05, || format!("{p}: alpha(20) - alpha(10) = {growth}"))?;
        ensure(reps[1].verdict == Verdict::Consistent, || format!("{p}: C4_6 {}", reps[1].verdict))?;
        within(start.elapsed(), 10.0)?;
        details.push(format!("{p}: slope {slope:.3}, growth {growth:.1e}"));
    }
    Ok(details.join("; "))
}

fn hyperbolic_boundedness() -> Outcome {
    let mut details = Vec::new();
    for p in ["harmonic", "exp"] {
        for c in [0.9, 0.99] {
            let t = solver::solve(&spec(2, p, "hyperbolic", "hyperbolic", c, 20.0)).map_err(|e| e.to_string())?;
            let class = classify_hyperbolic(&t);
            let ap = t.last().alpha_prime;
            ensure(class == HyperbolicClass::Bounded && ap < 1e-3, || {
                format!("{p} c={c}: class {class}, alpha'(20) = {ap:e}")
            })?;
            let gate = theorems::hyperbolic_gate();
            let first = t
                .nodes
                .iter()
                .position(|n| n.r > gate && n.alpha < n.r && n.alpha_prime < 1.0)
                .ok_or_else(|| format!("{p} c={c}: no node past the gate"))?;
            let violation = t.nodes[first..].iter().find(|n| n.alpha_prime >= 1.0);
            ensure(violation.is_none(), || format!("{p} c={c}: alpha' >= 1 at r = {}", violation.unwrap().r))?;
            let reps = check_hyperbolic_boundedness(&t);
            no_inconsistent(&reps)?;
            ensure(reps[0].verdict == Verdict::Consistent, || format!("{p} c={c}: L4_9 {}", reps[0].verdict))?;
            details.push(format!("{p} c={c}: alpha'(20) = {ap:.1e}"));
        }
    }
    Ok(details.join("; "))
}

fn liouville() -> Outcome {
    let a = entry_reports(TheoremId::T3_1);
    let flat = entry_reports(TheoremId::T3_13);
    let mut min_peak = f64::INFINITY;
    for case in a.iter().flat_map(|r| &r.cases) {
        ensure(case.verdict == Verdict::Consistent, || {
            format!("{}: {} {:?}", case.spec_summary, case.verdict, case.measured)
        })?;
        for (k, v) in &case.measured {
            if k.starts_with("max_alpha[") && !k.contains("c=0]") {
                ensure(*v > 10.0, || format!("{}: {k} = {v}", case.spec_summary))?;
                min_peak = min_peak.min(*v);
            }
        }
    }
    let mut min_floor = f64::INFINITY;
    for case in flat.iter().flat_map(|r| &r.cases) {
        ensure(case.verdict == Verdict::Consistent, || {
            format!("{}: {} {:?}", case.spec_summary, case.verdict, case.measured)
        })?;
        for (k, v) in &case.measured {
            if k.starts_with("alpha_prime_floor[") {
                ensure(*v >= 0.5, || format!("{}: {k} = {v}", case.spec_summary))?;
                min_floor = min_floor.min(*v);
            }
        }
    }
    ensure(min_peak.is_finite() && min_floor.is_finite(), || "no runs measured".into())?;
    Ok(format!("smallest peak alpha {min_peak:.1} (> 10), smallest floor alpha' {min_floor:.3} (>= 0.5)"))
}

fn variational_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let p = PROFILES[i % 3];
        let (f, g) = [("hyperbolic", "euclidean"), ("hyperbolic", "hyperbolic"), ("euclidean", "hyperbolic")][i % 3];
        let n = rng.gen_range(2..=4);
        let r_a = rng.gen_range(0.1..1.0);
        let r_b = r_a + rng.gen_range(0.5..2.0);
        let points = rng.gen_range(16..48);
        // Near a linear map, so that no cell's `F(θ)` dwarfs the rest of the
        // energy beyond double precision.
        let slope = rng.gen_range(0.3..1.5);
        let amp = slope * rng.gen_range(-0.1..0.1);
        let mode = f64::from(rng.gen_range(1..=3));
        let prob = DiscreteProblem::new(spec(n, p, f, g, slope, 10.0), (r_a, r_b), points, (slope * r_a, slope * r_b))
            .map_err(|e| e.to_string())?;
        let x: Vec<f64> = prob
            .nodes()
            .iter()
            .map(|r| (slope * r + amp * (mode * std::f64::consts::PI * (r - r_a) / (r_b - r_a)).sin()).max(0.01))
            .collect();
        let grad = variational::discrete_gradient(&prob, &x).map_err(|e| e.to_string())?;
        let j = rng.gen_range(0..points);
        let step = 1e-4;
        let at = |k: f64| {
            let mut y = x.clone();
            y[j] += k * step;
            variational::discrete_energy(&prob, &y).unwrap()
        };
        // Fourth-order central stencil.
        let fd = (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * step);
        let rel = (fd - grad[j]).abs() / grad[j].abs().max(1e-300);
        ensure(rel < 1e-6, || format!("point {i}: analytic {} vs {fd}, relative {rel:e}", grad[j]))?;
        worst = worst.max(rel);
    }

    let mut conv = Vec::new();
    for p in PROFILES {
        let s = spec(2, p, "hyperbolic", "euclidean", 1.0, 3.0);
        let traj = solver::solve(&s).map_err(|e| e.to_string())?;
        let (r_a, r_b) = (0.5, 3.0);
        let bc = (traj.dense_eval(r_a).unwrap().0, traj.dense_eval(r_b).unwrap().0);
        let mut errs = Vec::new();
        for points in [512, 1024] {
            let prob = DiscreteProblem::new(s.clone(), (r_a, r_b), points, bc).map_err(|e| e.to_string())?;
            let res = variational::minimize(&prob, &prob.linear_guess(), 1e-11, 10_000).map_err(|e| e.to_string())?;
            ensure(res.converged, || format!("{p} N={points}: not converged, gradient {:e}", res.grad_norm))?;
            let err = prob
                .nodes()
                .iter()
                .zip(&res.alpha_grid)
                .map(|(r, a)| (a - traj.dense_eval(*r).unwrap().0).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        ensure(errs[0] < 1e-4 && errs[1] < errs[0], || format!("{p}: errors {errs:?}"))?;
        conv.push(format!("{p} {:.1e}->{:.1e}", errs[0], errs[1]));
    }
    Ok(format!("gradient relative error <= {worst:.1e}; minimizer error {}", conv.join(", ")))
}

fn unique_continuation() -> Outcome {
    let catalog = Catalog::default_catalog();
    let specs: Vec<ProblemSpec> = catalog
        .trajectory_specs()
        .into_iter()
        .filter(|s| s.c > 0.0 && s.n >= 2)
        .map(|s| s.clone().with_horizon(s.r_max.min(1.0)))
        .collect();
    let reps: Vec<Result<VerificationReport, String>> = specs
        .par_iter()
        .map(|s| Ok(check_unique_continuation(&solver::solve(s).map_err(|e| e.to_string())?)))
        .collect();
    let mut ns = std::collections::BTreeSet::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (s, rep) in specs.iter().zip(reps) {
        let rep = rep?;
        let k = rep.measured.get("k_hat").copied().unwrap_or(f64::NAN);
        let critical = s.nm1() / 2.0 + 1.0;
        ensure((0.95..=1.05).contains(&k) && k < critical, || format!("{}: k = {k}", s.summary()))?;
        ensure(rep.verdict == Verdict::Consistent, || format!("{}: {}", s.summary(), rep.verdict))?;
        ns.insert(s.n);
        lo = lo.min(k);
        hi = hi.max(k);
    }
    for n in [2, 3, 5] {
        ensure(ns.contains(&n), || format!("no run with n = {n}"))?;
    }
    Ok(format!("{} runs, k in [{lo:.6}, {hi:.6}], n in {ns:?}", specs.len()))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<i32, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fharmonic"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    Ok(out.status.code().unwrap_or(-1))
}

fn cli_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [(&[&str], &str); 4] = [
        (&["solve", "--warp-g", "euclidean", "--c", "0.7"], "trajectory.csv"),
        (&["sweep", "--c-min", "0.8", "--c-max", "1.2", "--count", "9", "--r-max", "20"], "sweep.csv"),
        (&["shoot", "--r0", "2", "--target", "1", "--r-max", "2", "--warp-g", "euclidean"], "shoot.json"),
        (&["verify"], "verify.json"),
    ];
    for (i, (args, file)) in runs.iter().enumerate() {
        // Different worker counts must not change the bytes.
        let code_a = run_cli(a.path(), &[args, &["--workers", "1"][..]].concat())?;
        let code_b = run_cli(b.path(), &[args, &["--workers", "4"][..]].concat())?;
        ensure(code_a == 0 && code_b == 0, || format!("{args:?}: exit codes {code_a}, {code_b}"))?;
        let fa = std::fs::read(a.path().join(file)).map_err(|e| e.to_string())?;
        let fb = std::fs::read(b.path().join(file)).map_err(|e| e.to_string())?;
        ensure(fa == fb, || format!("run {i}: {file} differs"))?;
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("verify.json")).unwrap()).map_err(|e| e.to_string())?;
    let reports = report["reports"].as_array().ok_or("no reports array")?;
    let bad = reports.iter().filter(|r| r["verdict"] == "Inconsistent").count();
    ensure(reports.len() == TheoremId::ALL.len() && bad == 0, || {
        format!("{} reports, {bad} Inconsistent", reports.len())
    })?;
    Ok(format!("4 outputs byte-identical; verify exit 0 with {} reports, 0 Inconsistent", reports.len()))
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("exact-solution residuals", exact_residuals),
        ("solver accuracy", solver_accuracy),
        ("dual-integrator agreement", dual_integrators),
        ("chain-rule identity", chain_rule),
        ("monotonicity", monotonicity),
        ("non-crossing and uniqueness", uniqueness),
        ("trichotomy", trichotomy),
        ("decay", decay),
        ("hyperbolic boundedness", hyperbolic_boundedness),
        ("Liouville contrapositives", liouville),
        ("variational oracle", variational_oracle),
        ("unique-continuation exponent", unique_continuation),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name} ({secs:.2} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} ({secs:.2} s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
