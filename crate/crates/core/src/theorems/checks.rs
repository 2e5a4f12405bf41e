use rayon::prelude::*;

use super::{Draft, HyperbolicClass, TheoremId, VerificationReport};
use crate::field;
use crate::fit::linear_fit;
use crate::profiles::{geomspace, linspace, log_grid, FProfile, ProblemSpec, Warp};
use crate::shooting::{
    crossing_count, monotonicity_scan, shoot_with, strictly_increasing, ShootOptions,
};
use crate::solver::{self, Termination, Trajectory};

/// Points per hypothesis sampling grid.
pub const SAMPLES: usize = 200;
/// Height a run must exceed to count as unbounded at the horizon.
pub const DEFAULT_UNBOUNDED_LEVEL: f64 = 10.0;
/// Tail tolerances for boundedness at the horizon.
pub const BOUNDED_TAIL_TOL: f64 = 1e-3;
/// Hyperbolic boundedness is only judged on horizons at least this long.
pub const MIN_HYPERBOLIC_HORIZON: f64 = 20.0;
/// Relative deviation from `α = r` allowed on the unit-slope ray.
pub const IDENTITY_REL_TOL: f64 = 1e-6;
/// Slack on the explicit derivative threshold.
pub const DERIVATIVE_SLACK: f64 = 0.5;
/// Cap on `y` when sampling `g'² - g g''`, which cancels catastrophically
/// for exponentially growing `g`.
pub const CURVATURE_SAMPLE_CAP: f64 = 15.0;
const UNIQUENESS_TRAJ_TOL: f64 = 1e-6;
const TRICHOTOMY_ZERO_TOL: f64 = 1e-10;
const IDENTITY_RATE_TOL: f64 = 1e-8;
const SLOPE_MARGIN: f64 = 1e-6;

/// `(ln 3) / 2`, the gate radius for the hyperbolic comparison lemmas.
pub fn hyperbolic_gate() -> f64 {
    3f64.ln() / 2.0
}

fn max_alpha(traj: &Trajectory) -> f64 {
    traj.nodes.iter().map(|n| n.alpha).fold(0.0, f64::max)
}

fn r_grid(traj: &Trajectory) -> Vec<f64> {
    let lo = traj.spec.solver.eps_start;
    let hi = traj.r_end().max(lo * 2.0);
    geomspace(lo, hi, SAMPLES)
}

fn y_grid(hi: f64) -> Vec<f64> {
    linspace(0.0, hi.max(1e-6), SAMPLES)
}

/// `x` grid for conditions on `G`, with the central decade as reference.
fn x_grids() -> (Vec<f64>, Vec<f64>) {
    (log_grid(1e-3, 1e3, 20), log_grid(1e-1, 1e1, 20))
}

fn min_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::INFINITY, f64::min)
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Sampled sup, provided the function does not keep growing past the
/// reference samples.
fn sup_bounded(full: &[f64], reference: &[f64]) -> Option<f64> {
    let sup = max_of(full.iter().copied());
    let base = max_of(reference.iter().copied());
    (sup.is_finite() && sup <= 2.0 * base.max(0.0) + 1e-12).then_some(sup)
}

/// Sampled positive inf, provided the function does not keep decaying past
/// the reference samples.
fn inf_positive(full: &[f64], reference: &[f64]) -> Option<f64> {
    let inf = min_of(full.iter().copied());
    let base = min_of(reference.iter().copied());
    (inf > 0.0 && inf >= 0.5 * base).then_some(inf)
}

fn matches_sinh(w: &Warp, grid: &[f64]) -> bool {
    grid.iter().all(|&x| {
        let e = x.sinh();
        (w.eval(x) - e).abs() <= 1e-12 * e.abs().max(1.0)
    })
}

fn same_warp(a: &Warp, b: &Warp, grid: &[f64]) -> bool {
    grid.iter().all(|&x| {
        let (u, v) = (a.eval(x), b.eval(x));
        (u - v).abs() <= 1e-12 * u.abs().max(1.0)
    })
}

fn convex_on(g: &Warp, grid: &[f64]) -> f64 {
    min_of(grid.iter().map(|&y| g.eval_d2(y)))
}

fn log_derivatives(profile: &FProfile, grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&x| profile.log_derivative(x).unwrap_or(f64::INFINITY))
        .collect()
}

fn positive_solution(d: &mut Draft, traj: &Trajectory) {
    let min_alpha = min_of(traj.nodes.iter().map(|n| n.alpha));
    d.hyp(
        "alpha > 0",
        traj.spec.c > 0.0 && min_alpha > 0.0,
        format!("c = {}, min alpha = {min_alpha:e}", traj.spec.c),
    );
}

fn dimension_at_least_two(d: &mut Draft, n: u32) {
    d.hyp("n >= 2", n >= 2, format!("n = {n}"));
}

/// `α(r_end) - α(0.9 r_end)` and `α'(r_end)` both under [`BOUNDED_TAIL_TOL`].
pub fn bounded_tail(traj: &Trajectory) -> bool {
    if !traj.reached_horizon() {
        return false;
    }
    let end = traj.last();
    let Ok((a90, _)) = traj.dense_eval(0.9 * end.r) else {
        return false;
    };
    end.alpha - a90 < BOUNDED_TAIL_TOL && end.alpha_prime.abs() < BOUNDED_TAIL_TOL
}

fn unbounded_observed(traj: &Trajectory, level: f64) -> bool {
    traj.termination == Termination::BlowUp || max_alpha(traj) > level
}

/// Monotonicity of positive solutions.
pub fn check_monotone(traj: &Trajectory) -> VerificationReport {
    let spec = &traj.spec;
    let mut d = Draft::new(TheoremId::L2_1, spec.summary());
    dimension_at_least_two(&mut d, spec.n);
    positive_solution(&mut d, traj);
    let ys = y_grid(max_alpha(traj));
    let g_min = min_of(ys.iter().map(|&y| spec.g.eval_d1(y)));
    d.hyp("g' > 0", g_min > 0.0, format!("min g' = {g_min:e} on [0, max alpha]"));
    let min_ap = min_of(traj.nodes.iter().map(|n| n.alpha_prime));
    d.measure("min_alpha_prime", min_ap);
    d.measure("nodes", traj.nodes.len() as f64);
    d.finish(Some(min_ap > 0.0))
}

/// One-dimensional domains only admit linear solutions. Pass a trajectory
/// from [`solver::integrate`] to exercise the integrator.
pub fn check_linear_n1(traj: &Trajectory) -> VerificationReport {
    let spec = &traj.spec;
    let mut d = Draft::new(TheoremId::L2_2, spec.summary());
    d.hyp("n = 1", spec.n == 1, format!("n = {}", spec.n));
    let min_alpha = min_of(traj.nodes.iter().map(|n| n.alpha));
    d.hyp("alpha >= 0", min_alpha >= 0.0, format!("min alpha = {min_alpha:e}"));
    let end = traj.last();
    let c_hat = end.alpha / end.r;
    let scale = max_alpha(traj).max(1.0);
    let dev = max_of(traj.nodes.iter().map(|n| (n.alpha - c_hat * n.r).abs()));
    d.measure("slope", c_hat);
    d.measure("max_deviation_from_line", dev);
    d.finish(Some(dev <= 1e-8 * scale))
}

/// Exponent of the leading behavior near the origin, fitted on
/// `[eps_start, 100 eps_start]`.
pub fn check_unique_continuation(traj: &Trajectory) -> VerificationReport {
    let spec = &traj.spec;
    let mut d = Draft::new(TheoremId::L2_7, spec.summary());
    d.hyp("c > 0", spec.c > 0.0, format!("c = {}", spec.c));
    let eps = spec.solver.eps_start;
    let hi = (100.0 * eps).min(traj.r_end());
    let critical = spec.nm1() / 2.0 + 1.0;
    d.measure("critical_exponent", critical);
    if !(hi > eps) {
        d.note("trajectory too short for the near-origin window");
        return d.finish(None);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in geomspace(eps, hi, 20) {
        if let Ok((a, _)) = traj.dense_eval(r) {
            if a > 0.0 {
                xs.push(r.ln());
                ys.push(a.ln());
            }
        }
    }
    let Some(fit) = linear_fit(&xs, &ys) else {
        d.note("no positive samples near the origin");
        return d.finish(None);
    };
    d.measure("k_hat", fit.slope);
    d.measure("fit_r_squared", fit.r_squared);
    if !fit.trusted() {
        return d.finish(None);
    }
    d.finish(Some(fit.slope <= critical - 0.1))
}

/// Shoots from two disjoint starting brackets and compares the results.
pub fn check_uniqueness(
    spec: &ProblemSpec,
    r0: f64,
    target: f64,
    match_tol: f64,
) -> VerificationReport {
    let mut d = Draft::new(
        TheoremId::T2_15,
        format!("{} R0={r0} target={target} match_tol={match_tol:e}", spec.summary()),
    );
    let y_hi = 2.0 * target.max(r0);
    let convex = convex_on(&spec.g, &y_grid(y_hi));
    d.hyp("g'' >= 0", convex >= -1e-12, format!("min g'' = {convex:e} on [0, {y_hi}]"));
    if !(match_tol > 0.0 && match_tol <= 1e-6 * target.max(1.0)) {
        d.note(format!(
            "match_tol = {match_tol:e} is too loose to tell two slopes apart; no judgment"
        ));
        return d.finish(None);
    }
    let run = |bracket| {
        shoot_with(
            spec,
            r0,
            target,
            &ShootOptions {
                match_tol,
                bracket,
                ..ShootOptions::default()
            },
        )
    };
    let (first, second) = match (run((0.0, 0.3)), run((3.0, 5.0))) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => {
            for err in [a.err(), b.err()].into_iter().flatten() {
                d.note(format!("shooting failed: {err}"));
            }
            return d.finish(None);
        }
    };
    let gap = (first.c_star - second.c_star).abs();
    let hi = r0.min(first.trajectory.r_end()).min(second.trajectory.r_end());
    let lo = spec.solver.eps_start;
    let diff = max_of(linspace(lo, hi, SAMPLES).into_iter().map(|r| {
        let a = first.trajectory.dense_eval(r).map(|v| v.0).unwrap_or(f64::NAN);
        let b = second.trajectory.dense_eval(r).map(|v| v.0).unwrap_or(f64::NAN);
        (a - b).abs()
    }));
    d.measure("c_first", first.c_star);
    d.measure("c_second", second.c_star);
    d.measure("c_gap", gap);
    d.measure("max_trajectory_gap", diff);
    d.finish(Some(gap <= 10.0 * match_tol && diff < UNIQUENESS_TRAJ_TOL))
}

/// Endpoint monotonicity and pairwise ordering over a slope scan.
pub fn check_non_crossing(spec: &ProblemSpec, r0: f64, c_grid: &[f64]) -> VerificationReport {
    let mut d = Draft::new(
        TheoremId::T2_15,
        format!("{} R0={r0} scan of {} slopes", spec.summary(), c_grid.len()),
    );
    let scan = match monotonicity_scan(spec, r0, c_grid) {
        Ok(s) => s,
        Err(err) => {
            d.hyp("scan runs", false, err.to_string());
            return d.finish(None);
        }
    };
    let trajs: Vec<Trajectory> = match c_grid
        .par_iter()
        .map(|&c| solver::solve(&spec.clone().with_slope(c).with_horizon(r0)))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(t) => t,
        Err(err) => {
            d.hyp("scan runs", false, err.to_string());
            return d.finish(None);
        }
    };
    let y_hi = max_of(trajs.iter().map(max_alpha)).max(1.0);
    let convex = convex_on(&spec.g, &y_grid(y_hi));
    d.hyp("g'' >= 0", convex >= -1e-12, format!("min g'' = {convex:e} on [0, {y_hi}]"));
    let mut crossings = 0;
    for i in 0..trajs.len() {
        for j in i + 1..trajs.len() {
            crossings += crossing_count(&trajs[i], &trajs[j], 400);
        }
    }
    let increasing = strictly_increasing(&scan);
    d.measure("scan_points", scan.len() as f64);
    d.measure("crossings", crossings as f64);
    d.measure("endpoint_increasing", f64::from(u8::from(increasing)));
    let undecided = trajs
        .iter()
        .any(|t| !matches!(t.termination, Termination::ReachedHorizon | Termination::BlowUp));
    if undecided {
        d.note("a scan run ended without reaching R0 or blowing up");
        return d.finish(None);
    }
    d.finish(Some(increasing && crossings == 0))
}

/// Sign of `α - r` along a trajectory between identical warps.
pub fn check_trichotomy(traj: &Trajectory) -> VerificationReport {
    let spec = &traj.spec;
    let mut d = Draft::new(TheoremId::P2_24, spec.summary());
    let rs = r_grid(traj);
    d.hyp("f = g", same_warp(&spec.f, &spec.g, &rs), "sampled on [eps_start, r_end]");
    let y_hi = max_alpha(traj).max(traj.r_end());
    let convex = convex_on(&spec.g, &y_grid(y_hi));
    d.hyp("g'' >= 0", convex >= -1e-12, format!("min g'' = {convex:e}"));

    let devs: Vec<f64> = traj.nodes.iter().map(|n| n.alpha - n.r).collect();
    let zero = traj
        .nodes
        .iter()
        .zip(&devs)
        .all(|(n, dv)| dv.abs() <= TRICHOTOMY_ZERO_TOL * n.r.max(1.0));
    let above = devs.iter().all(|dv| *dv > 0.0);
    let below = devs.iter().all(|dv| *dv < 0.0);
    let changes = devs
        .windows(2)
        .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
        .count();
    d.measure("sign_changes", changes as f64);
    d.measure("max_abs_deviation", max_of(devs.iter().map(|v| v.abs())));
    d.measure("identically_zero", f64::from(u8::from(zero)));
    d.finish(Some(zero || above || below))
}

/// Conditions on `G` for the first Liouville statement. Returns whether
/// either holds and a description.
fn growth_conditions(profile: &FProfile) -> (bool, String) {
    let (full, core) = x_grids();
    let ratio = log_derivatives(profile, &full);
    let ratio_core = log_derivatives(profile, &core);
    let weighted: Vec<f64> = full.iter().zip(&ratio).map(|(x, q)| x * q).collect();
    let weighted_core: Vec<f64> = core.iter().zip(&ratio_core).map(|(x, q)| x * q).collect();
    let a = sup_bounded(&weighted, &weighted_core);
    let b = sup_bounded(&ratio, &ratio_core);
    let show = |v: Option<f64>| v.map_or("unbounded".to_string(), |s| format!("sup = {s:e}"));
    (
        a.is_some() || b.is_some(),
        format!("x G'/G: {}; G'/G: {}", show(a), show(b)),
    )
}

/// Contrapositive of the first Liouville statement over a family of slopes:
/// every nonzero run must exceed `level` or blow up before `r_max`.
pub fn check_liouville_a(spec: &ProblemSpec, c_grid: &[f64], level: f64) -> VerificationReport {
    let mut d = Draft::new(
        TheoremId::T3_1,
        format!("{} slopes {:?} level {level}", spec.summary(), c_grid),
    );
    d.note("contrapositive observation at a finite horizon, not a proof");
    let runs: Vec<_> = c_grid
        .par_iter()
        .map(|&c| solver::solve(&spec.clone().with_slope(c)))
        .collect();

    let eps = spec.solver.eps_start;
    let rs = geomspace(eps, spec.r_max, SAMPLES);
    let fp: Vec<f64> = rs.iter().map(|&r| spec.f.eval_d1(r).abs()).collect();
    let b = sup_bounded(&fp, &fp[..SAMPLES / 2]);
    d.hyp("|f'| <= b", b.is_some(), format!("sup |f'| = {:e}", max_of(fp.iter().copied())));

    let y_hi = runs
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(max_alpha)
        .fold(1.0, f64::max);
    let ys = y_grid(y_hi);
    let g_min = min_of(ys.iter().map(|&y| spec.g.eval_d1(y)));
    d.hyp("g' > 0", g_min > 0.0, format!("min g' = {g_min:e} on [0, {y_hi}]"));
    let ys_capped = y_grid(y_hi.min(CURVATURE_SAMPLE_CAP));
    let curv = min_of(ys_capped.iter().map(|&y| {
        let (g, g1, g2) = (spec.g.eval(y), spec.g.eval_d1(y), spec.g.eval_d2(y));
        g1 * g1 - g * g2
    }));
    d.hyp(
        "g'^2 - g g'' >= c^2 > 0",
        curv > 0.0,
        format!("min = {curv:e} on [0, {}]", y_hi.min(CURVATURE_SAMPLE_CAP)),
    );
    let (growth_ok, growth_detail) = growth_conditions(&spec.profile);
    d.hyp("G >= c x G' or G >= c_o G'", growth_ok, growth_detail);

    let mut conclusion = Some(true);
    for (c, run) in c_grid.iter().zip(&runs) {
        let traj = match run {
            Ok(t) => t,
            Err(err) => {
                d.note(format!("c = {c}: {err}"));
                conclusion = None;
                continue;
            }
        };
        d.measure(format!("max_alpha[c={c}]"), max_alpha(traj));
        if *c == 0.0 {
            continue;
        }
        let verdict = if unbounded_observed(traj, level) {
            Some(true)
        } else if bounded_tail(traj) {
            Some(false)
        } else {
            None
        };
        conclusion = match (conclusion, verdict) {
            (Some(false), _) | (_, Some(false)) => Some(false),
            (None, _) | (_, None) => None,
            _ => Some(true),
        };
    }
    d.finish(conclusion)
}

/// Tail derivative bound for targets of constant negative curvature and
/// profiles with `G' >= c_o G`.
pub fn check_derivative_bound(traj: &Trajectory) -> VerificationReport {
    let spec = &traj.spec;
    let mut d = Draft::new(TheoremId::P3_10, spec.summary());
    let y_hi = max_alpha(traj).max(1.0);
    d.hyp("g = sinh", matches_sinh(&spec.g, &y_grid(y_hi)), "sampled on [0, max alpha]");
    let r_end = traj.r_end();
    let tail = linspace(r_end / 2.0, r_end, SAMPLES);
    let k: Vec<f64> = tail.iter().map(|&r| spec.f.eval_d1(r) / spec.f.eval(r)).collect();
    let k_min = min_of(k.iter().copied());
    let k_max = max_of(k.iter().copied());
    d.hyp(
        "0 <= f'/f <= a",
        k_min >= 0.0 && k_max.is_finite(),
        format!("f'/f in [{k_min:e}, {k_max:e}] on [r_end/2, r_end]"),
    );
    let (full, core) = x_grids();
    let c0 = inf_positive(&log_derivatives(&spec.profile, &full), &log_derivatives(&spec.profile, &core));
    d.hyp(
        "G' >= c_o G",
        c0.is_some(),
        c0.map_or("inf G'/G is not positive".to_string(), |c| format!("c_o = {c:e}")),
    );
    let Some(c0) = c0 else {
        return d.finish(None);
    };
    let threshold = 2f64.max((2.0 / c0).sqrt());
    let start = traj.dense_eval(r_end / 2.0).map(|v| v.1).unwrap_or(f64::INFINITY);
    let bound = threshold.max(start) + DERIVATIVE_SLACK;
    let tail_max = max_of(
        traj.nodes
            .iter()
            .filter(|n| n.r >= r_end / 2.0)
            .map(|n| n.alpha_prime),
    );
    d.measure("threshold", threshold);
    d.measure("alpha_prime_at_half", start);
    d.measure("bound", bound);
    d.measure("tail_max_alpha_prime", tail_max);
    d.finish(Some(tail_max <= bound))
}

/// Contrapositive of the flat-domain Liouville statement: nonzero runs keep
/// `α'` above a positive floor on `[r0, r_end]` and grow past `level`.
pub fn check_liouville_flat(
    spec: &ProblemSpec,
    c_grid: &[f64],
    r0: f64,
    level: f64,
) -> VerificationReport {
    let mut d = Draft::new(
        TheoremId::T3_13,
        format!("{} slopes {:?} r0={r0} level {level}", spec.summary(), c_grid),
    );
    d.note("contrapositive observation at a finite horizon, not a proof");
    let runs: Vec<_> = c_grid
        .par_iter()
        .map(|&c| solver::solve(&spec.clone().with_slope(c)))
        .collect();

    let rs = linspace(r0, spec.r_max, SAMPLES);
    let fs: Vec<f64> = rs.iter().map(|&r| spec.f.eval(r)).collect();
    let fps: Vec<f64> = rs.iter().map(|&r| spec.f.eval_d1(r)).collect();
    let half = SAMPLES / 2;
    let f_lo = min_of(fs.iter().copied());
    let f_hi = sup_bounded(&fs, &fs[..half]);
    d.hyp(
        "c_o <= f <= c_1",
        f_lo > 0.0 && f_hi.is_some(),
        format!("f in [{f_lo:e}, {:e}] on [r0, r_max]", max_of(fs.iter().copied())),
    );
    let fp_lo = min_of(fps.iter().copied());
    let fp_hi = sup_bounded(&fps, &fps[..half]);
    d.hyp(
        "0 <= f' <= C_1",
        fp_lo >= -1e-12 && fp_hi.is_some(),
        format!("f' in [{fp_lo:e}, {:e}] on [r0, r_max]", max_of(fps.iter().copied())),
    );
    let y_hi = runs
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(max_alpha)
        .fold(1.0, f64::max)
        .min(1e6);
    let ys = y_grid(y_hi);
    let gp: Vec<f64> = ys.iter().map(|&y| spec.g.eval_d1(y)).collect();
    let c2 = inf_positive(&gp, &gp[..half]);
    d.hyp(
        "g' > C_2 > 0",
        c2.is_some(),
        format!("min g' = {:e} on [0, {y_hi:e}]", min_of(gp.iter().copied())),
    );
    let (full, core) = x_grids();
    let c0 = sup_bounded(&log_derivatives(&spec.profile, &full), &log_derivatives(&spec.profile, &core));
    d.hyp(
        "G' <= C_o G",
        c0.is_some(),
        c0.map_or("sup G'/G unbounded".to_string(), |c| format!("C_o = {c:e}")),
    );

    let mut conclusion = Some(true);
    for (c, run) in c_grid.iter().zip(&runs) {
        let traj = match run {
            Ok(t) => t,
            Err(err) => {
                d.note(format!("c = {c}: {err}"));
                conclusion = None;
                continue;
            }
        };
        if *c == 0.0 {
            continue;
        }
        let window: Vec<f64> = traj
            .nodes
            .iter()
            .filter(|n| n.r >= r0)
            .map(|n| n.alpha_prime)
            .collect();
        let verdict = if window.is_empty() {
            d.note(format!("c = {c}: run ended before r0"));
            None
        } else {
            let floor = min_of(window.iter().copied());
            d.measure(format!("alpha_prime_floor[c={c}]"), floor);
            d.measure(format!("max_alpha[c={c}]"), max_alpha(traj));
            if floor > 0.0 && unbounded_observed(traj, level) {
                Some(true)
            } else if bounded_tail(traj) {
                Some(false)
            } else {
                None
            }
        };
        conclusion = match (conclusion, verdict) {
            (Some(false), _) | (_, Some(false)) => Some(false),
            (None, _) | (_, None) => None,
            _ => Some(true),
        };
    }
    d.finish(conclusion)
}

/// The energy identity in the sign-consistent form `θ' = B · G/A` with
/// `0 < G/A <= 1`, checked against direct differentiation at every node.
pub fn check_theta_identity(traj: &Trajectory) -> VerificationReport {
    let spec = &traj.spec;
    let mut d = Draft::new(TheoremId::E4_1, spec.summary());
    let (full, _) = x_grids();
    let g_ok = full.iter().all(|&x| match (spec.profile.eval_g(x), spec.profile.eval_g_prime(x)) {
        (Ok(g), Ok(gp)) => g > 0.0 && gp >= 0.0,
        _ => true,
    });
    d.hyp("G > 0 and G' >= 0", g_ok, "sampled on [1e-3, 1e3]");
    d.note("the first inequality of the displayed chain only holds where theta' >= 0; the factored form is checked instead");

    let mut max_err: f64 = 0.0;
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    let mut sign_mismatch = 0usize;
    let mut literal_failures = 0usize;
    let mut checked = 0usize;
    let nm1 = spec.nm1();
    for n in &traj.nodes {
        let st = n.state();
        let Ok((b, ratio)) = field::theta_prime_factors(spec, &st) else {
            continue;
        };
        let Ok(chain) = field::theta_prime_chain(spec, &st, n.alpha_second) else {
            continue;
        };
        let fv = spec.f.eval(n.r);
        let gv = spec.g.eval(n.alpha);
        let q = (gv / fv) * (spec.g.eval_d1(n.alpha) / fv);
        let s = (gv / fv).powi(2);
        let k = spec.f.eval_d1(n.r) / fv;
        let ap = n.alpha_prime;
        let scale = (n.alpha_prime * n.alpha_second).abs()
            + nm1 * ((q * ap).abs() + (s * k).abs())
            + nm1 * (2.0 * (q * ap).abs() + k.abs() * (s + ap * ap));
        if !scale.is_finite() {
            continue;
        }
        checked += 1;
        let tp = b * ratio;
        max_err = max_err.max((chain - tp).abs() / scale.max(f64::MIN_POSITIVE));
        min_ratio = min_ratio.min(ratio);
        max_ratio = max_ratio.max(ratio);
        if tp != 0.0 && b != 0.0 && (tp > 0.0) != (b > 0.0) {
            sign_mismatch += 1;
        }
        if tp < 0.0 && ratio < 1.0 {
            literal_failures += 1;
        }
    }
    d.measure("nodes_checked", checked as f64);
    d.measure("max_relative_identity_error", max_err);
    d.measure("min_g_over_a", min_ratio);
    d.measure("max_g_over_a", max_ratio);
    d.measure("sign_mismatches", sign_mismatch as f64);
    d.measure("literal_inequality_failures", literal_failures as f64);
    if checked == 0 {
        return d.finish(None);
    }
    d.finish(Some(
        max_err <= IDENTITY_RATE_TOL
            && min_ratio > 0.0
            && max_ratio <= 1.0 + 1e-15
            && sign_mismatch == 0,
    ))
}

/// Decay of `α'` against `f` and boundedness for rapidly growing domains.
/// Returns the derivative-decay report followed by the boundedness report.
pub fn check_decay(traj: &Trajectory, eps: f64) -> Vec<VerificationReport> {
    let spec = &traj.spec;
    let r_end = traj.r_end();
    let mut decay = Draft::new(TheoremId::T4_4, format!("{} eps={eps}", spec.summary()));
    dimension_at_least_two(&mut decay, spec.n);
    positive_solution(&mut decay, traj);
    let fp_end = spec.f.eval_d1(r_end);
    let fp_half = spec.f.eval_d1(r_end / 2.0);
    decay.hyp(
        "f' -> infinity",
        fp_end >= 10.0 * fp_half.max(1.0),
        format!("f'(r_end/2) = {fp_half:e}, f'(r_end) = {fp_end:e}"),
    );
    let y_hi = (2.0 * max_alpha(traj)).max(10.0);
    let ys = y_grid(y_hi);
    let gp: Vec<f64> = ys.iter().map(|&y| spec.g.eval_d1(y)).collect();
    let g_min = min_of(gp.iter().copied());
    let a = sup_bounded(&gp, &gp[..SAMPLES / 2]);
    decay.hyp(
        "0 < g' <= a",
        g_min > 0.0 && a.is_some(),
        format!("g' in [{g_min:e}, {:e}] on [0, {y_hi}]", max_of(gp.iter().copied())),
    );
    decay.hyp("0 < eps < 1", eps > 0.0 && eps < 1.0, format!("eps = {eps}"));

    let mut bounded = Draft::new(TheoremId::C4_6, spec.summary());
    for h in &decay.hypotheses {
        if h.name != "0 < eps < 1" {
            bounded.hyp(&h.name, h.met, h.detail.clone());
        }
    }
    let tail = linspace(r_end / 2.0, r_end, SAMPLES);
    let local_power = min_of(
        tail.iter()
            .map(|&r| r * spec.f.eval_d1(r) / spec.f.eval(r)),
    );
    bounded.hyp(
        "f >= C' r^s, s > 1",
        local_power > 1.0,
        format!("min r f'/f = {local_power:e} on [r_end/2, r_end]"),
    );

    // Slope of ln α' against ln f over the last third.
    let mut xs = Vec::new();
    let mut ys_fit = Vec::new();
    for r in linspace(2.0 * r_end / 3.0, r_end, 100) {
        if let Ok((_, ap)) = traj.dense_eval(r) {
            if ap > 0.0 {
                xs.push(spec.f.eval(r).ln());
                ys_fit.push(ap.ln());
            }
        }
    }
    let limit = -(1.0 - eps) + 0.05;
    decay.measure("slope_limit", limit);
    let decay_conclusion = match linear_fit(&xs, &ys_fit) {
        Some(fit) if xs.len() >= 10 => {
            decay.measure("slope", fit.slope);
            decay.measure("fit_r_squared", fit.r_squared);
            fit.trusted().then_some(fit.slope <= limit)
        }
        _ => {
            decay.note("alpha' not positive over enough of the tail to fit");
            None
        }
    };

    let a_end = traj.last().alpha;
    let a_half = traj.dense_eval(r_end / 2.0).map(|v| v.0).unwrap_or(f64::NAN);
    bounded.measure("alpha_end", a_end);
    bounded.measure("alpha_half", a_half);
    bounded.measure("tail_growth", a_end - a_half);
    let bounded_conclusion = if !traj.reached_horizon() {
        bounded.note(format!("run ended with {}", traj.termination));
        None
    } else {
        Some(a_end - a_half < 0.1 * a_half)
    };

    vec![decay.finish(decay_conclusion), bounded.finish(bounded_conclusion)]
}

fn identity_tol(r: f64) -> f64 {
    IDENTITY_REL_TOL * r.max(1.0)
}

/// First node past the gate with `α <= r` (strictly below by the noise
/// margin when `strict`) and `α'` below one.
fn gate_node(traj: &Trajectory, strict: bool) -> Option<usize> {
    let gate = hyperbolic_gate();
    traj.nodes.iter().position(|n| {
        let below = if strict {
            n.alpha < n.r - identity_tol(n.r)
        } else {
            n.alpha <= n.r
        };
        n.r > gate && below && n.alpha_prime < 1.0 - SLOPE_MARGIN
    })
}

/// Long-range class of a solution between hyperbolic spaces.
pub fn classify_hyperbolic(traj: &Trajectory) -> HyperbolicClass {
    let nodes = &traj.nodes;
    if traj.spec.c == 1.0 && nodes.iter().all(|n| (n.alpha - n.r).abs() <= identity_tol(n.r)) {
        return HyperbolicClass::Identity;
    }
    if nodes.iter().all(|n| n.alpha > n.r) {
        return HyperbolicClass::AboveIdentity;
    }
    if traj.r_end() >= MIN_HYPERBOLIC_HORIZON && bounded_tail(traj) && gate_node(traj, false).is_some() {
        return HyperbolicClass::Bounded;
    }
    HyperbolicClass::Unresolved
}

/// Comparison with the identity, exponential decay of the energy density,
/// the bounded-or-identity alternative and boundedness, in that order.
pub fn check_hyperbolic_boundedness(traj: &Trajectory) -> Vec<VerificationReport> {
    let spec = &traj.spec;
    let class = classify_hyperbolic(traj);
    let rs = r_grid(traj);
    let ys = y_grid(max_alpha(traj).max(1.0));
    let f_sinh = matches_sinh(&spec.f, &rs);
    let g_sinh = matches_sinh(&spec.g, &ys);
    let common = |id: TheoremId, min_n: u32| {
        let mut d = Draft::new(id, spec.summary());
        d.hyp("f = sinh", f_sinh, "sampled on [eps_start, r_end]");
        d.hyp("g = sinh", g_sinh, "sampled on [0, max alpha]");
        d.hyp(
            if min_n >= 2 { "n >= 2" } else { "n >= 1" },
            spec.n >= min_n,
            format!("n = {}", spec.n),
        );
        positive_solution(&mut d, traj);
        d.class(class);
        d.measure("r_end", traj.r_end());
        d
    };

    // Comparison lemma.
    let mut l49 = common(TheoremId::L4_9, 1);
    let gate = gate_node(traj, false);
    l49.hyp(
        "r0 > (ln 3)/2 with alpha(r0) <= r0 and alpha'(r0) < 1",
        gate.is_some(),
        gate.map_or("no qualifying node".to_string(), |i| format!("r0 = {}", traj.nodes[i].r)),
    );
    let l49_conclusion = gate.map(|i| {
        let r0 = &traj.nodes[i];
        let delta = r0.r - r0.alpha;
        let later = &traj.nodes[i + 1..];
        let min_excess = min_of(later.iter().map(|n| (n.r - n.alpha) - delta));
        let max_ap = max_of(later.iter().map(|n| n.alpha_prime));
        l49.measure("r0", r0.r);
        l49.measure("delta", delta);
        l49.measure("min_gap_excess", min_excess);
        l49.measure("max_alpha_prime_after", max_ap);
        later
            .iter()
            .all(|n| (n.r - n.alpha) > delta - 1e-9 * n.r.max(1.0) && n.alpha_prime < 1.0)
    });
    l49.note("the gap checked is r - alpha(r) >= r0 - alpha(r0), as established in the proof");

    // Exponential decay of θ.
    let mut l411 = common(TheoremId::L4_11, 2);
    let strict = gate_node(traj, true);
    l411.hyp(
        "r0 > (ln 3)/2 with alpha(r0) < r0 and alpha'(r0) < 1",
        strict.is_some(),
        strict.map_or("no qualifying node".to_string(), |i| format!("r0 = {}", traj.nodes[i].r)),
    );
    let r_end = traj.r_end();
    let (xs, ys_fit): (Vec<f64>, Vec<f64>) = traj
        .nodes
        .iter()
        .filter(|n| n.r >= r_end / 2.0 && n.theta > 0.0)
        .map(|n| (n.r, n.theta.ln()))
        .unzip();
    let l411_conclusion = if r_end < MIN_HYPERBOLIC_HORIZON || !traj.reached_horizon() {
        l411.note("horizon too short to observe the tail");
        None
    } else {
        match linear_fit(&xs, &ys_fit) {
            Some(fit) => {
                l411.measure("theta_decay_rate", fit.slope);
                l411.measure("fit_r_squared", fit.r_squared);
                if !fit.trusted() {
                    None
                } else if fit.slope < 0.0 && bounded_tail(traj) {
                    Some(true)
                } else if fit.slope >= 0.0 {
                    Some(false)
                } else {
                    None
                }
            }
            None => None,
        }
    };

    // Bounded or asymptotic to the identity.
    let mut l413 = common(TheoremId::L4_13, 2);
    // Purely relative slack: near the origin `α - r` is of order `(c - 1) r`.
    let touches = traj
        .nodes
        .iter()
        .find(|n| n.alpha <= n.r * (1.0 + IDENTITY_REL_TOL));
    l413.hyp(
        "alpha(r0) <= r0 for some r0 > 0",
        touches.is_some(),
        touches.map_or("alpha > r everywhere".to_string(), |n| format!("r0 = {}", n.r)),
    );
    let l413_conclusion = match class {
        HyperbolicClass::Bounded | HyperbolicClass::Identity => Some(true),
        HyperbolicClass::AboveIdentity => Some(false),
        HyperbolicClass::Unresolved => None,
    };

    // Boundedness below the identity.
    let mut t414 = common(TheoremId::T4_14, 2);
    let below = traj.nodes.iter().position(|n| n.alpha < n.r - identity_tol(n.r));
    t414.hyp(
        "alpha(r0) < r0 for some r0 > 0",
        below.is_some(),
        below.map_or("no node below the identity".to_string(), |i| format!("r0 = {}", traj.nodes[i].r)),
    );
    let t414_conclusion = below.and_then(|i| {
        let crossed = traj.nodes[i..]
            .iter()
            .any(|n| n.alpha - n.r > identity_tol(n.r));
        if crossed {
            Some(false)
        } else if r_end >= MIN_HYPERBOLIC_HORIZON && bounded_tail(traj) {
            Some(true)
        } else {
            None
        }
    });
    let end = traj.last();
    t414.measure("alpha_end", end.alpha);
    t414.measure("alpha_prime_end", end.alpha_prime);

    vec![
        l49.finish(l49_conclusion),
        l411.finish(l411_conclusion),
        l413.finish(l413_conclusion),
        t414.finish(t414_conclusion),
    ]
}
