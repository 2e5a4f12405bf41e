//! Boundary matching by bisection on the initial slope.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::profiles::ProblemSpec;
use crate::solver::{self, SolveError, Termination, Trajectory};

pub const DEFAULT_MATCH_TOL: f64 = 1e-10;
pub const DEFAULT_C_CAP: f64 = 1e3;
/// Bisection stops once the bracket is this narrow.
pub const MIN_WIDTH: f64 = 1e-14;
const C_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShootError {
    #[error("no slope in [{lo:e}, {cap:e}] brackets target {target}")]
    NoBracket { lo: f64, cap: f64, target: f64 },
    #[error("invalid shooting input: {0}")]
    InvalidInput(String),
    #[error("solver stopped with {termination} at r = {r} for c = {c}")]
    SolverEvent {
        c: f64,
        r: f64,
        termination: Termination,
    },
    #[error("bracket collapsed at c = {c} with |alpha(R0) - target| = {residual:e}")]
    Stalled { c: f64, residual: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    pub match_tol: f64,
    pub c_cap: f64,
    /// Starting bracket; expanded up or down until it straddles the target.
    pub bracket: (f64, f64),
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            match_tol: DEFAULT_MATCH_TOL,
            c_cap: DEFAULT_C_CAP,
            bracket: (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShootingResult {
    pub c_star: f64,
    pub trajectory: Trajectory,
    pub iterations: usize,
    pub bracket_history: Vec<(f64, f64)>,
    pub residual_at_target: f64,
    /// False when `g'' < 0` was sampled on the target range.
    pub uniqueness_guaranteed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub c: f64,
    /// `None` when the run ended before `R0`.
    pub alpha_at_r0: Option<f64>,
    pub termination: Termination,
}

/// `α(R0; c)`, with blow-up before `R0` mapped to `+∞`.
pub fn alpha_at(spec: &ProblemSpec, r0: f64, c: f64) -> Result<f64, ShootError> {
    if c == 0.0 {
        return Ok(0.0);
    }
    let traj = solver::solve(&spec.clone().with_slope(c).with_horizon(r0))?;
    match traj.termination {
        Termination::ReachedHorizon => Ok(traj.last().alpha),
        Termination::BlowUp => Ok(f64::INFINITY),
        termination => Err(ShootError::SolverEvent {
            c,
            r: traj.r_end(),
            termination,
        }),
    }
}

/// Sampled `g'' >= 0` on `[0, y_max]`.
pub fn target_convex(spec: &ProblemSpec, y_max: f64) -> bool {
    (0..=200).all(|i| {
        let y = y_max * i as f64 / 200.0;
        spec.g.eval_d2(y) >= -1e-12
    })
}

pub fn shoot(
    spec: &ProblemSpec,
    r0: f64,
    target: f64,
    match_tol: f64,
) -> Result<ShootingResult, ShootError> {
    shoot_with(
        spec,
        r0,
        target,
        &ShootOptions {
            match_tol,
            ..ShootOptions::default()
        },
    )
}

pub fn shoot_with(
    spec: &ProblemSpec,
    r0: f64,
    target: f64,
    opts: &ShootOptions,
) -> Result<ShootingResult, ShootError> {
    check(spec, r0, target, opts)?;
    let eval = |c: f64| alpha_at(spec, r0, c);
    let (mut lo, mut hi) = opts.bracket;
    let mut history = vec![(lo, hi)];
    let mut a_lo = eval(lo)?;
    let mut a_hi = eval(hi)?;

    while a_hi < target {
        if hi >= opts.c_cap {
            return Err(ShootError::NoBracket {
                lo: opts.bracket.0,
                cap: opts.c_cap,
                target,
            });
        }
        lo = hi;
        a_lo = a_hi;
        hi = (2.0 * hi).min(opts.c_cap);
        a_hi = eval(hi)?;
        history.push((lo, hi));
    }
    while a_lo > target {
        if lo <= C_FLOOR {
            lo = 0.0;
            a_lo = 0.0;
        } else {
            hi = lo;
            a_hi = a_lo;
            lo *= 0.5;
            a_lo = eval(lo)?;
        }
        history.push((lo, hi));
    }

    let mut iterations = 0;
    let (c_star, residual) = loop {
        if (a_lo - target).abs() < opts.match_tol {
            break (lo, (a_lo - target).abs());
        }
        if (a_hi - target).abs() < opts.match_tol {
            break (hi, (a_hi - target).abs());
        }
        if hi - lo < MIN_WIDTH {
            let (c, a) = if (a_lo - target).abs() <= (a_hi - target).abs() {
                (lo, a_lo)
            } else {
                (hi, a_hi)
            };
            return Err(ShootError::Stalled {
                c,
                residual: (a - target).abs(),
            });
        }
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let a_mid = eval(mid)?;
        if a_mid < target {
            lo = mid;
            a_lo = a_mid;
        } else {
            hi = mid;
            a_hi = a_mid;
        }
        history.push((lo, hi));
    };

    let trajectory = solver::solve(&spec.clone().with_slope(c_star))?;
    Ok(ShootingResult {
        c_star,
        trajectory,
        iterations,
        bracket_history: history,
        residual_at_target: residual,
        uniqueness_guaranteed: target_convex(spec, target.max(r0)),
    })
}

fn check(spec: &ProblemSpec, r0: f64, target: f64, opts: &ShootOptions) -> Result<(), ShootError> {
    let bad = |m: &str| Err(ShootError::InvalidInput(m.to_string()));
    if !(r0 > spec.solver.eps_start && r0 <= spec.r_max) {
        return bad("R0 must lie in (eps_start, r_max]");
    }
    if !(target > 0.0 && target.is_finite()) {
        return bad("target must be positive");
    }
    if !(opts.match_tol > 0.0) {
        return bad("match_tol must be positive");
    }
    let (lo, hi) = opts.bracket;
    if !(lo >= 0.0 && hi > lo && hi <= opts.c_cap) {
        return bad("bracket must satisfy 0 <= lo < hi <= c_cap");
    }
    Ok(())
}

/// `α(R0; c)` over a strictly increasing positive grid, evaluated in parallel.
pub fn monotonicity_scan(
    spec: &ProblemSpec,
    r0: f64,
    c_grid: &[f64],
) -> Result<Vec<ScanPoint>, ShootError> {
    if !(r0 > spec.solver.eps_start && r0 <= spec.r_max) {
        return Err(ShootError::InvalidInput(
            "R0 must lie in (eps_start, r_max]".into(),
        ));
    }
    if c_grid.iter().any(|&c| !(c > 0.0)) || c_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ShootError::InvalidInput(
            "c_grid must be positive and strictly increasing".into(),
        ));
    }
    c_grid
        .par_iter()
        .map(|&c| {
            let traj = solver::solve(&spec.clone().with_slope(c).with_horizon(r0))?;
            let alpha_at_r0 = traj.reached_horizon().then(|| traj.last().alpha);
            Ok(ScanPoint {
                c,
                alpha_at_r0,
                termination: traj.termination,
            })
        })
        .collect()
}

pub fn strictly_increasing(scan: &[ScanPoint]) -> bool {
    scan.windows(2).all(|w| match (w[0].alpha_at_r0, w[1].alpha_at_r0) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => w[1].termination == Termination::BlowUp,
        (None, _) => false,
    })
}

/// Number of samples, evenly spaced over the shared interval, at which
/// `lower` is not strictly below `upper`.
pub fn crossing_count(lower: &Trajectory, upper: &Trajectory, samples: usize) -> usize {
    let lo = lower.first().r.max(upper.first().r);
    let hi = lower.r_end().min(upper.r_end());
    if !(hi > lo) || samples < 2 {
        return 0;
    }
    let mut count = 0;
    for i in 0..samples {
        let r = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
        let (a, _) = lower.dense_eval(r).expect("inside shared range");
        let (b, _) = upper.dense_eval(r).expect("inside shared range");
        if a >= b {
            count += 1;
        }
    }
    count
}
