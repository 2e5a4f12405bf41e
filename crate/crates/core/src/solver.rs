//! Forward integration of the singular initial value problem `α(0⁺) = 0`.
//!
//! The equation is singular at `r = 0`, so integration starts at
//! `r = eps_start` from the linear seed `α = c·r`, `α' = c` and proceeds with
//! an adaptive Dormand–Prince 5(4) pair on the first-order system
//! `(α, α')`. Blow-up, degeneracy and step failure end a run normally: the
//! returned [`Trajectory`] records why it stopped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{self, FieldError, State};
use crate::profiles::{validate_spec, ProblemSpec, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Radius at which the linear seed is placed.
    pub eps_start: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// `|α|` or `|α'|` beyond this value ends the run with
    /// [`Termination::BlowUp`].
    pub blowup_threshold: f64,
    /// Bound on the relative node residual for a run that reaches its horizon.
    pub tol_residual: f64,
    /// Upper bound on the step length; keeps the Hermite dense output accurate.
    pub max_step: f64,
}

impl Default for SolverConfig {
    fn default() -> SolverConfig {
        SolverConfig {
            eps_start: 1e-6,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_steps: 1_000_000,
            blowup_threshold: 1e6,
            tol_residual: 1e-7,
            max_step: 0.05,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<(), SolveError> {
        let bad = |what: &str| Err(SolveError::InvalidConfig(what.to_string()));
        if !(self.eps_start > 0.0 && self.eps_start < 1.0) {
            return bad("0 < eps_start < 1");
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("rel_tol, abs_tol > 0");
        }
        if !(self.blowup_threshold > 1.0) {
            return bad("blowup_threshold > 1");
        }
        if !(self.max_step > 0.0) {
            return bad("max_step > 0");
        }
        if self.max_steps == 0 {
            return bad("max_steps >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("problem violates sampled conditions: {}", render(.0))]
    InvalidSpec(Vec<Violation>),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("r = {r} outside the covered interval [{lo}, {hi}]")]
    OutOfRange { r: f64, lo: f64, hi: f64 },
    #[error("closed form applies only to n = 1, got n = {0}")]
    NotOneDimensional(u32),
}

fn render(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    ReachedHorizon,
    BlowUp,
    DegenerateCoefficient,
    StepFailure,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Termination::ReachedHorizon => "ReachedHorizon",
            Termination::BlowUp => "BlowUp",
            Termination::DegenerateCoefficient => "DegenerateCoefficient",
            Termination::StepFailure => "StepFailure",
        };
        fmt.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub r: f64,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub alpha_second: f64,
    pub theta: f64,
    pub g_theta: f64,
    /// Relative residual of the equation at this node.
    pub residual: f64,
}

impl Node {
    pub fn state(&self) -> State {
        State::new(self.r, self.alpha, self.alpha_prime)
    }
}

/// A solved profile curve: accepted nodes in increasing `r` plus the reason
/// the run ended.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub spec: ProblemSpec,
    pub nodes: Vec<Node>,
    pub termination: Termination,
    /// Diagnostic for runs that did not reach the horizon.
    pub event: Option<String>,
}

impl Trajectory {
    pub fn first(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn last(&self) -> &Node {
        self.nodes.last().expect("trajectory has at least one node")
    }

    pub fn r_end(&self) -> f64 {
        self.last().r
    }

    pub fn reached_horizon(&self) -> bool {
        self.termination == Termination::ReachedHorizon
    }

    pub fn max_residual(&self) -> f64 {
        self.nodes.iter().map(|n| n.residual.abs()).fold(0.0, f64::max)
    }

    /// `(α, α')` at `r` by cubic Hermite interpolation on the bracketing step.
    pub fn dense_eval(&self, r: f64) -> Result<(f64, f64), SolveError> {
        dense_eval(self, r)
    }
}

/// Seed state at `eps_start`: the linear leading behavior `α ≈ c·r`.
pub fn singular_start(spec: &ProblemSpec) -> State {
    let eps = spec.solver.eps_start;
    State::new(eps, spec.c * eps, spec.c)
}

fn node_at(spec: &ProblemSpec, st: State, alpha_second: f64) -> Node {
    let (theta, g_theta) = match field::evaluate(spec, &st) {
        Ok(ev) => (ev.theta, ev.g_theta),
        Err(_) => (
            field::energy_density(spec, &st).unwrap_or(f64::NAN),
            f64::NAN,
        ),
    };
    let residual = field::relative_residual(spec, &st, alpha_second).unwrap_or(f64::NAN);
    Node {
        r: st.r,
        alpha: st.alpha,
        alpha_prime: st.alpha_prime,
        alpha_second,
        theta,
        g_theta,
        residual,
    }
}

fn check_inputs(spec: &ProblemSpec) -> Result<(), SolveError> {
    spec.solver.check()?;
    let violations = validate_spec(spec);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(SolveError::InvalidSpec(violations))
    }
}

fn uniform(lo: f64, hi: f64, count: usize) -> impl Iterator<Item = f64> {
    (0..=count).map(move |i| {
        if i == count {
            hi
        } else {
            lo + (hi - lo) * i as f64 / count as f64
        }
    })
}

const CLOSED_FORM_POINTS: usize = 1000;

/// Sampled closed-form trajectory `α ≡ c·r` for values of `n` or `c` where it
/// is the exact solution (`n = 1`, or the zero map).
fn linear_trajectory(spec: &ProblemSpec) -> Trajectory {
    let eps = spec.solver.eps_start;
    let nodes = uniform(eps, spec.r_max, CLOSED_FORM_POINTS)
        .map(|r| node_at(spec, State::new(r, spec.c * r, spec.c), 0.0))
        .collect();
    Trajectory {
        spec: spec.clone(),
        nodes,
        termination: Termination::ReachedHorizon,
        event: None,
    }
}

/// Exact solution for `n = 1`: `α(r) = c·r`, sampled on a uniform grid.
pub fn solve_n1(spec: &ProblemSpec) -> Result<Trajectory, SolveError> {
    if spec.n != 1 {
        return Err(SolveError::NotOneDimensional(spec.n));
    }
    spec.solver.check()?;
    Ok(linear_trajectory(spec))
}

/// Solve the initial value problem on `[eps_start, r_max]`.
///
/// `c = 0` returns the zero map and `n = 1` the closed form without
/// integrating; everything else goes through [`integrate`].
pub fn solve(spec: &ProblemSpec) -> Result<Trajectory, SolveError> {
    check_inputs(spec)?;
    if spec.c == 0.0 {
        return Ok(linear_trajectory(spec));
    }
    if spec.n == 1 {
        return solve_n1(spec);
    }
    Ok(run(spec))
}

/// Numerical integration regardless of `n` and `c`.
pub fn integrate(spec: &ProblemSpec) -> Result<Trajectory, SolveError> {
    check_inputs(spec)?;
    Ok(run(spec))
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Difference between the 5th and 4th order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

type Vec2 = [f64; 2];

fn rhs(spec: &ProblemSpec, r: f64, y: Vec2) -> Result<Vec2, FieldError> {
    let a2 = field::alpha_second(spec, &State::new(r, y[0], y[1]))?;
    if a2.is_finite() {
        Ok([y[1], a2])
    } else {
        Err(FieldError::WarpOverflow { r, alpha: y[0] })
    }
}

/// Result of one attempted step: the 5th order solution, the error vector
/// and the derivative at the new point (first stage of the next step).
pub(crate) struct StepOutcome {
    pub y: Vec2,
    pub err: Vec2,
    pub k_end: Vec2,
}

pub(crate) fn dp_step(
    spec: &ProblemSpec,
    r: f64,
    y: Vec2,
    k1: Vec2,
    h: f64,
) -> Result<StepOutcome, FieldError> {
    let mut k = [[0.0; 2]; 7];
    k[0] = k1;
    for s in 1..7 {
        let mut ys = y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                ys[0] += h * a * kj[0];
                ys[1] += h * a * kj[1];
            }
        }
        k[s] = rhs(spec, r + C[s] * h, ys)?;
        if s == 6 {
            // stage 7 is evaluated at the 5th order solution (FSAL)
            let mut err = [0.0; 2];
            for (i, e) in E.iter().enumerate() {
                err[0] += h * e * k[i][0];
                err[1] += h * e * k[i][1];
            }
            return Ok(StepOutcome {
                y: ys,
                err,
                k_end: k[6],
            });
        }
    }
    unreachable!("tableau has seven stages")
}

fn error_norm(cfg: &SolverConfig, y: Vec2, y_new: Vec2, err: Vec2) -> f64 {
    let mut sum = 0.0;
    for i in 0..2 {
        let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
        sum += (err[i] / scale).powi(2);
    }
    (sum / 2.0).sqrt()
}

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - 0.75 * BETA;

fn classify(err: &FieldError) -> Termination {
    match err {
        FieldError::DegenerateCoefficient { .. } => Termination::DegenerateCoefficient,
        FieldError::WarpOverflow { .. } | FieldError::Profile(_) => Termination::BlowUp,
        FieldError::NonPositiveRadius(_) => Termination::StepFailure,
    }
}

fn run(spec: &ProblemSpec) -> Trajectory {
    let cfg = &spec.solver;
    let seed = singular_start(spec);
    let mut r = seed.r;
    let mut y = [seed.alpha, seed.alpha_prime];

    let finish = |nodes: Vec<Node>, termination: Termination, event: Option<String>| Trajectory {
        spec: spec.clone(),
        nodes,
        termination,
        event,
    };

    let mut k1 = match rhs(spec, r, y) {
        Ok(k) => k,
        Err(e) => {
            let node = node_at(spec, seed, f64::NAN);
            return finish(vec![node], classify(&e), Some(e.to_string()));
        }
    };
    let mut nodes = vec![node_at(spec, seed, k1[1])];

    let span = spec.r_max - r;
    let mut h = (0.1 * r).min(cfg.max_step).min(span);
    let mut fac_old: f64 = 1e-4;
    let mut last_reject = false;
    let mut last_overflow: Option<FieldError> = None;

    for _ in 0..cfg.max_steps {
        if r >= spec.r_max {
            return finish(nodes, Termination::ReachedHorizon, None);
        }
        if h < 16.0 * f64::EPSILON * r.max(1.0) {
            return match last_overflow {
                Some(e) => finish(nodes, Termination::BlowUp, Some(e.to_string())),
                None => finish(
                    nodes,
                    Termination::StepFailure,
                    Some(format!("step size underflow at r = {r}")),
                ),
            };
        }
        let last = r + h >= spec.r_max;
        let h_try = if last { spec.r_max - r } else { h };

        let outcome = match dp_step(spec, r, y, k1, h_try) {
            Ok(o) => o,
            Err(e @ FieldError::DegenerateCoefficient { .. }) => {
                return finish(nodes, Termination::DegenerateCoefficient, Some(e.to_string()));
            }
            Err(e) => {
                // overflow inside a trial step: retry shorter
                last_overflow = Some(e);
                h = h_try * 0.25;
                last_reject = true;
                continue;
            }
        };

        let err = error_norm(cfg, y, outcome.y, outcome.err);
        if !err.is_finite() {
            h = h_try * 0.25;
            last_reject = true;
            continue;
        }
        let fac11 = err.powf(EXPO);
        if err <= 1.0 {
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h_try / fac;
            fac_old = err.max(1e-4);
            if last_reject {
                h_new = h_new.min(h_try);
            }
            last_reject = false;
            last_overflow = None;

            r = if last { spec.r_max } else { r + h_try };
            y = outcome.y;
            k1 = outcome.k_end;
            nodes.push(node_at(spec, State::new(r, y[0], y[1]), k1[1]));

            if !(y[0].abs() <= cfg.blowup_threshold) {
                return finish(
                    nodes,
                    Termination::BlowUp,
                    Some(format!("alpha exceeded {} at r = {r}", cfg.blowup_threshold)),
                );
            }
            // a vertical asymptote shows up as slope growth at bounded alpha
            if !(y[1].abs() <= cfg.blowup_threshold) {
                return finish(
                    nodes,
                    Termination::BlowUp,
                    Some(format!("alpha' exceeded {} at r = {r}", cfg.blowup_threshold)),
                );
            }
            h = h_new.min(cfg.max_step);
        } else {
            h = h_try / (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_reject = true;
        }
    }
    if r >= spec.r_max {
        return finish(nodes, Termination::ReachedHorizon, None);
    }
    finish(
        nodes,
        Termination::StepFailure,
        Some(format!("max_steps = {} exhausted at r = {r}", cfg.max_steps)),
    )
}

fn hermite(t: f64, h: f64, y0: f64, m0: f64, y1: f64, m1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * m1
}

/// `(α, α')` at `r` inside the covered interval.
///
/// `α` is the cubic Hermite interpolant of the `(α, α')` pairs at the ends of
/// the bracketing step, and `α'` likewise of the `(α', α'')` pairs. Values at
/// nodes are returned exactly.
pub fn dense_eval(traj: &Trajectory, r: f64) -> Result<(f64, f64), SolveError> {
    let nodes = &traj.nodes;
    let (lo, hi) = (traj.first().r, traj.last().r);
    if !(r >= lo && r <= hi) {
        return Err(SolveError::OutOfRange { r, lo, hi });
    }
    // first node with node.r >= r
    let idx = nodes.partition_point(|n| n.r < r);
    let right = &nodes[idx];
    if right.r == r {
        return Ok((right.alpha, right.alpha_prime));
    }
    let left = &nodes[idx - 1];
    let h = right.r - left.r;
    let t = (r - left.r) / h;
    let alpha = hermite(t, h, left.alpha, left.alpha_prime, right.alpha, right.alpha_prime);
    let alpha_prime = hermite(
        t,
        h,
        left.alpha_prime,
        left.alpha_second,
        right.alpha_prime,
        right.alpha_second,
    );
    Ok((alpha, alpha_prime))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::*;

    fn hyperbolic_pair(profile: FProfile) -> ProblemSpec {
        ProblemSpec::new(2, profile, warp_hyperbolic(), warp_hyperbolic())
    }

    #[test]
    fn seed_is_linear() {
        let spec = hyperbolic_pair(make_harmonic_profile());
        assert_eq!(singular_start(&spec.clone().with_slope(0.0)), State::new(1e-6, 0.0, 0.0));
        let s = singular_start(&spec.with_slope(1.0));
        assert_eq!((s.alpha, s.alpha_prime), (1e-6, 1.0));
    }

    #[test]
    fn zero_slope_short_circuits() {
        // the p-profile would be degenerate at θ = 0 if integrated
        let spec = hyperbolic_pair(make_p_profile(4.0).unwrap()).with_horizon(3.0);
        let traj = solve(&spec).unwrap();
        assert_eq!(traj.termination, Termination::ReachedHorizon);
        assert!(traj.nodes.iter().all(|n| n.alpha == 0.0 && n.alpha_prime == 0.0));
        assert_eq!(traj.r_end(), 3.0);
    }

    #[test]
    fn one_dimensional_closed_form() {
        let spec = ProblemSpec::new(1, make_exp_profile(), warp_euclidean(), warp_hyperbolic())
            .with_slope(2.0)
            .with_horizon(3.0);
        let traj = solve_n1(&spec).unwrap();
        assert_eq!(traj.last().alpha, 6.0);
        assert_eq!(traj.r_end(), 3.0);
        assert!(traj.nodes.iter().all(|n| n.residual == 0.0));
        for n in &traj.nodes {
            let res = field::residual(&spec, &n.state(), 0.0).unwrap();
            assert!(res.abs() <= 1e-15 * n.g_theta.max(1.0));
        }
        let zero = solve_n1(&spec.clone().with_slope(0.0)).unwrap();
        assert!(zero.nodes.iter().all(|n| n.alpha == 0.0));
        assert!(matches!(
            solve_n1(&hyperbolic_pair(make_harmonic_profile())),
            Err(SolveError::NotOneDimensional(2))
        ));
    }

    #[test]
    fn identity_solution_is_tracked() {
        let spec = hyperbolic_pair(make_harmonic_profile()).with_slope(1.0).with_horizon(5.0);
        let traj = solve(&spec).unwrap();
        assert!(traj.reached_horizon());
        assert_eq!(traj.r_end(), 5.0);
        for n in &traj.nodes {
            assert!((n.alpha - n.r).abs() < 1e-8, "r={} alpha={}", n.r, n.alpha);
        }
        assert!(traj.max_residual() < spec.solver.tol_residual);
    }

    #[test]
    fn nodes_increase_from_eps_start() {
        let spec = ProblemSpec::new(
            3,
            make_exp_profile(),
            warp_hyperbolic(),
            warp_euclidean(),
        )
        .with_slope(0.8)
        .with_horizon(6.0);
        let traj = solve(&spec).unwrap();
        assert_eq!(traj.first().r, spec.solver.eps_start);
        assert!(traj.nodes.windows(2).all(|w| w[1].r > w[0].r));
        assert!(traj.nodes.windows(2).all(|w| w[1].r - w[0].r <= spec.solver.max_step * (1.0 + 1e-12)));
    }

    #[test]
    fn blow_up_is_a_termination_status() {
        let spec = hyperbolic_pair(make_harmonic_profile()).with_slope(1.1).with_horizon(20.0);
        let traj = solve(&spec).unwrap();
        assert_eq!(traj.termination, Termination::BlowUp, "{:?}", traj.event);
        assert!(traj.r_end() < 20.0);
        assert!(traj.event.is_some());
    }

    #[test]
    fn threshold_blow_up() {
        let cfg = SolverConfig {
            blowup_threshold: 50.0,
            ..SolverConfig::default()
        };
        let spec = ProblemSpec::new(2, make_harmonic_profile(), warp_tanh(), warp_euclidean())
            .with_slope(1.0)
            .with_horizon(50.0)
            .with_solver(cfg);
        let traj = solve(&spec).unwrap();
        assert_eq!(traj.termination, Termination::BlowUp);
        assert!(traj.last().alpha > 50.0);
    }

    #[test]
    fn step_budget_is_enforced() {
        let cfg = SolverConfig {
            max_steps: 10,
            ..SolverConfig::default()
        };
        let spec = hyperbolic_pair(make_harmonic_profile())
            .with_slope(0.5)
            .with_solver(cfg);
        let traj = solve(&spec).unwrap();
        assert_eq!(traj.termination, Termination::StepFailure);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let cfg = SolverConfig {
            eps_start: 2.0,
            ..SolverConfig::default()
        };
        let spec = hyperbolic_pair(make_harmonic_profile()).with_solver(cfg);
        assert!(matches!(solve(&spec), Err(SolveError::InvalidConfig(_))));

        let spec = hyperbolic_pair(make_harmonic_profile()).with_slope(-1.0);
        match solve(&spec) {
            Err(SolveError::InvalidSpec(v)) => assert_eq!(v[0].condition, "c >= 0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dense_output() {
        let spec = hyperbolic_pair(make_p_profile(3.0).unwrap())
            .with_slope(1.0)
            .with_horizon(4.0);
        let traj = solve(&spec).unwrap();
        for n in traj.nodes.iter().step_by(7) {
            assert_eq!(traj.dense_eval(n.r).unwrap(), (n.alpha, n.alpha_prime));
        }
        for r in [1e-6, 0.013, 0.5, 1.234_567, 3.999] {
            let (a, ap) = traj.dense_eval(r).unwrap();
            assert!((a - r).abs() < 1e-9 && (ap - 1.0).abs() < 1e-9, "r={r}: {a} {ap}");
        }
        assert!(matches!(traj.dense_eval(4.5), Err(SolveError::OutOfRange { .. })));
        assert!(matches!(traj.dense_eval(0.0), Err(SolveError::OutOfRange { .. })));
    }

    /// Fixed steps of the 5th order solution; the measured order on a smooth
    /// stretch away from the singular point should be about 5.
    #[test]
    fn embedded_pair_order() {
        let spec = ProblemSpec::new(2, make_harmonic_profile(), warp_hyperbolic(), warp_euclidean());
        let start = 0.5;
        let y0 = [0.4, 0.6];
        let integrate_fixed = |steps: usize| {
            let h = 1.0 / steps as f64;
            let mut y = y0;
            let mut r = start;
            for _ in 0..steps {
                let k1 = rhs(&spec, r, y).unwrap();
                y = dp_step(&spec, r, y, k1, h).unwrap().y;
                r += h;
            }
            y[0]
        };
        let (a, b, c) = (integrate_fixed(10), integrate_fixed(20), integrate_fixed(40));
        let order = ((a - b) / (b - c)).abs().log2();
        assert!(order >= 4.0, "measured order {order}");
    }
}
