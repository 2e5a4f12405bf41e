//! Discretized energy functional on a finite interval with fixed endpoints.
//!
//! The interval `[r_a, r_b]` carries `N` interior nodes at uniform spacing
//! `h = (r_b - r_a) / (N + 1)`. Each cell contributes
//! `F(θ) f^{n-1} h` evaluated at its midpoint, with the slope taken as the
//! cell difference quotient and `α` as the average of the cell endpoints.

use serde::Serialize;
use thiserror::Error;

use crate::field::{self, State};
use crate::profiles::ProblemSpec;

pub const DEFAULT_GRAD_TOL: f64 = 1e-8;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
/// Predicted decreases below this fraction of the energy are not resolvable.
const ROUNDING: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VariationalError {
    #[error("invalid discrete problem: {0}")]
    InvalidProblem(String),
    #[error("grid has {got} values, expected {expected}")]
    WrongLength { got: usize, expected: usize },
}

#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pub spec: ProblemSpec,
    pub r_a: f64,
    pub r_b: f64,
    /// Number of interior nodes.
    pub n_interior: usize,
    pub alpha_a: f64,
    pub alpha_b: f64,
}

impl DiscreteProblem {
    pub fn new(
        spec: ProblemSpec,
        (r_a, r_b): (f64, f64),
        n_interior: usize,
        (alpha_a, alpha_b): (f64, f64),
    ) -> Result<DiscreteProblem, VariationalError> {
        let bad = |m: &str| Err(VariationalError::InvalidProblem(m.to_string()));
        if n_interior < 8 {
            return bad("N >= 8");
        }
        if !(r_a >= spec.solver.eps_start && r_b > r_a && r_b.is_finite()) {
            return bad("eps_start <= r_a < r_b");
        }
        if !(alpha_a >= 0.0 && alpha_b >= 0.0 && alpha_a.is_finite() && alpha_b.is_finite()) {
            return bad("boundary values must be finite and >= 0");
        }
        Ok(DiscreteProblem {
            spec,
            r_a,
            r_b,
            n_interior,
            alpha_a,
            alpha_b,
        })
    }

    pub fn h(&self) -> f64 {
        (self.r_b - self.r_a) / (self.n_interior + 1) as f64
    }

    /// Interior node radii.
    pub fn nodes(&self) -> Vec<f64> {
        let h = self.h();
        (1..=self.n_interior)
            .map(|i| self.r_a + i as f64 * h)
            .collect()
    }

    /// Linear interpolant of the boundary data at the interior nodes.
    pub fn linear_guess(&self) -> Vec<f64> {
        let len = self.r_b - self.r_a;
        self.nodes()
            .iter()
            .map(|r| self.alpha_a + (self.alpha_b - self.alpha_a) * (r - self.r_a) / len)
            .collect()
    }

    fn check_len(&self, alpha: &[f64]) -> Result<(), VariationalError> {
        if alpha.len() == self.n_interior {
            Ok(())
        } else {
            Err(VariationalError::WrongLength {
                got: alpha.len(),
                expected: self.n_interior,
            })
        }
    }
}

/// Per-cell geometry that does not depend on `α`.
struct Cells {
    h: f64,
    nm1: f64,
    /// `f^{n-1}` at the midpoint.
    weight: Vec<f64>,
    /// `1 / f²` at the midpoint.
    inv_f2: Vec<f64>,
}

impl Cells {
    fn new(p: &DiscreteProblem) -> Cells {
        let h = p.h();
        let cells = p.n_interior + 1;
        let nm1 = p.spec.nm1();
        let mut weight = Vec::with_capacity(cells);
        let mut inv_f2 = Vec::with_capacity(cells);
        for i in 0..cells {
            let rm = p.r_a + (i as f64 + 0.5) * h;
            let f = p.spec.f.eval(rm);
            weight.push(f.powf(nm1));
            inv_f2.push(1.0 / (f * f));
        }
        Cells {
            h,
            nm1,
            weight,
            inv_f2,
        }
    }
}

/// Cell quantities at one `α` configuration.
struct CellState {
    slope: f64,
    theta: f64,
    /// `g(m) g'(m) / f²` at the midpoint value `m`.
    q: f64,
}

fn with_boundary(p: &DiscreteProblem, alpha: &[f64]) -> Vec<f64> {
    let mut full = Vec::with_capacity(alpha.len() + 2);
    full.push(p.alpha_a);
    full.extend_from_slice(alpha);
    full.push(p.alpha_b);
    full
}

fn cell_states(p: &DiscreteProblem, cells: &Cells, alpha: &[f64]) -> Vec<CellState> {
    let full = with_boundary(p, alpha);
    full.windows(2)
        .enumerate()
        .map(|(i, w)| {
            let slope = (w[1] - w[0]) / cells.h;
            let m = 0.5 * (w[0] + w[1]);
            let g = p.spec.g.eval(m);
            let s = g * g * cells.inv_f2[i];
            CellState {
                slope,
                theta: 0.5 * (slope * slope + cells.nm1 * s),
                q: g * p.spec.g.eval_d1(m) * cells.inv_f2[i],
            }
        })
        .collect()
}

fn f_of(p: &DiscreteProblem, x: f64) -> f64 {
    p.spec.profile.eval_f(x).unwrap_or(f64::INFINITY)
}

fn g_of(p: &DiscreteProblem, x: f64) -> f64 {
    p.spec.profile.eval_g(x).unwrap_or(f64::INFINITY)
}

/// Midpoint-rule energy; `+∞` when `F` overflows.
pub fn discrete_energy(p: &DiscreteProblem, alpha: &[f64]) -> Result<f64, VariationalError> {
    p.check_len(alpha)?;
    let cells = Cells::new(p);
    Ok(energy_with(p, &cells, alpha))
}

fn energy_with(p: &DiscreteProblem, cells: &Cells, alpha: &[f64]) -> f64 {
    cell_states(p, cells, alpha)
        .iter()
        .zip(&cells.weight)
        .map(|(c, w)| f_of(p, c.theta) * w * cells.h)
        .sum()
}

/// Exact partial derivatives of [`discrete_energy`] in the interior values.
pub fn discrete_gradient(p: &DiscreteProblem, alpha: &[f64]) -> Result<Vec<f64>, VariationalError> {
    p.check_len(alpha)?;
    let cells = Cells::new(p);
    Ok(gradient_with(p, &cells, alpha))
}

fn gradient_with(p: &DiscreteProblem, cells: &Cells, alpha: &[f64]) -> Vec<f64> {
    let states = cell_states(p, cells, alpha);
    // dE/dθ per cell, times h.
    let scale: Vec<f64> = states
        .iter()
        .zip(&cells.weight)
        .map(|(c, w)| g_of(p, c.theta) * w * cells.h)
        .collect();
    let half = 0.5 * cells.nm1;
    (0..alpha.len())
        .map(|j| {
            let left = &states[j];
            let right = &states[j + 1];
            scale[j] * (left.slope / cells.h + half * left.q)
                + scale[j + 1] * (-right.slope / cells.h + half * right.q)
        })
        .collect()
}

/// Tridiagonal metric from the principal part of the energy Hessian:
/// cell weights `(G + G' s²) f^{n-1} / h`.
fn principal_metric(p: &DiscreteProblem, cells: &Cells, alpha: &[f64]) -> Vec<f64> {
    cell_states(p, cells, alpha)
        .iter()
        .zip(&cells.weight)
        .map(|(c, w)| {
            let g = g_of(p, c.theta);
            let gp = p.spec.profile.eval_g_prime(c.theta).unwrap_or(f64::INFINITY);
            (g + gp * c.slope * c.slope) * w / cells.h
        })
        .collect()
}

/// Solves `M x = b` for the SPD tridiagonal `M` assembled from cell weights.
fn solve_metric(weights: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut diag: Vec<f64> = (0..n).map(|j| weights[j] + weights[j + 1]).collect();
    let off: Vec<f64> = (0..n.saturating_sub(1)).map(|j| -weights[j + 1]).collect();
    let mut rhs = b.to_vec();
    for j in 1..n {
        let m = off[j - 1] / diag[j - 1];
        diag[j] -= m * off[j - 1];
        rhs[j] -= m * rhs[j - 1];
    }
    let mut x = vec![0.0; n];
    for j in (0..n).rev() {
        let upper = if j + 1 < n { off[j] * x[j + 1] } else { 0.0 };
        x[j] = (rhs[j] - upper) / diag[j];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Metric {
    /// Plain Euclidean gradient.
    Identity,
    /// Gradient measured in the principal-part Hessian metric.
    Principal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub metric: Metric,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            grad_tol: DEFAULT_GRAD_TOL,
            max_iters: 10_000,
            metric: Metric::Principal,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizeResult {
    pub alpha_grid: Vec<f64>,
    pub energy: f64,
    /// Max-norm of the projected gradient.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Energy after each accepted iteration, starting with the initial value
    /// and advanced by the increment the line search accepted.
    pub energy_history: Vec<f64>,
}

pub fn minimize(
    p: &DiscreteProblem,
    init: &[f64],
    grad_tol: f64,
    max_iters: usize,
) -> Result<MinimizeResult, VariationalError> {
    minimize_with(
        p,
        init,
        &MinimizeOptions {
            grad_tol,
            max_iters,
            ..MinimizeOptions::default()
        },
    )
}

/// Projected gradient descent with Armijo backtracking.
///
/// Once the predicted decrease falls below the rounding level of the total
/// energy, the Armijo test uses [`energy_increment`] instead of a difference
/// of two totals.
pub fn minimize_with(
    p: &DiscreteProblem,
    init: &[f64],
    opts: &MinimizeOptions,
) -> Result<MinimizeResult, VariationalError> {
    p.check_len(init)?;
    if init.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(VariationalError::InvalidProblem(
            "initial grid must be finite and >= 0".into(),
        ));
    }
    let cells = Cells::new(p);
    let mut x = init.to_vec();
    let mut energy = energy_with(p, &cells, &x);
    let mut grad = gradient_with(p, &cells, &x);
    let mut gnorm = projected_norm(&x, &grad);
    let mut history = vec![energy];
    let mut iterations = 0;
    let mut step: f64 = 1.0;

    while gnorm >= opts.grad_tol && iterations < opts.max_iters {
        let dir = match opts.metric {
            Metric::Identity => Some(grad.clone()),
            Metric::Principal => solve_metric(&principal_metric(p, &cells, &x), &grad),
        };
        let Some(dir) = dir else { break };
        let mut t = match opts.metric {
            Metric::Principal => 1.0,
            Metric::Identity => (4.0 * step).min(1e12),
        };
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = x
                .iter()
                .zip(&dir)
                .map(|(xi, di)| (xi - t * di).max(0.0))
                .collect();
            let predicted: f64 = grad
                .iter()
                .zip(trial.iter().zip(&x))
                .map(|(g, (a, b))| g * (a - b))
                .sum();
            let resolvable = -predicted > ROUNDING * energy.abs().max(f64::MIN_POSITIVE);
            let change = if resolvable {
                energy_with(p, &cells, &trial) - energy
            } else {
                energy_increment(p, &cells, &x, &trial)
            };
            if change.is_finite() && change <= ARMIJO * predicted {
                accepted = Some((trial, energy + change));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, e_trial)) = accepted else { break };
        step = t;
        x = trial;
        energy = e_trial;
        grad = gradient_with(p, &cells, &x);
        gnorm = projected_norm(&x, &grad);
        history.push(energy);
        iterations += 1;
    }

    Ok(MinimizeResult {
        energy: energy_with(p, &cells, &x),
        alpha_grid: x,
        grad_norm: gnorm,
        iterations,
        converged: gnorm < opts.grad_tol,
        energy_history: history,
    })
}

/// `E(to) - E(from)` accumulated cell by cell from the displacement, with
/// `F(θ_to) - F(θ_from)` and `g(m_to) - g(m_from)` by Simpson's rule on their
/// derivatives. Accurate for small steps, where the difference of two totals
/// is lost to rounding.
pub fn energy_increment_between(
    p: &DiscreteProblem,
    from: &[f64],
    to: &[f64],
) -> Result<f64, VariationalError> {
    p.check_len(from)?;
    p.check_len(to)?;
    Ok(energy_increment(p, &Cells::new(p), from, to))
}

fn energy_increment(p: &DiscreteProblem, cells: &Cells, from: &[f64], to: &[f64]) -> f64 {
    let a = with_boundary(p, from);
    let b = with_boundary(p, to);
    let delta: Vec<f64> = b.iter().zip(&a).map(|(y, x)| y - x).collect();
    let simpson = |df: &dyn Fn(f64) -> f64, x0: f64, dx: f64| {
        dx / 6.0 * (df(x0) + 4.0 * df(x0 + 0.5 * dx) + df(x0 + dx))
    };
    let g_prime = |y: f64| p.spec.g.eval_d1(y);
    let big_g = |x: f64| g_of(p, x);
    let mut total = 0.0;
    for i in 0..a.len() - 1 {
        let d0 = (a[i + 1] - a[i]) / cells.h;
        let dd = (delta[i + 1] - delta[i]) / cells.h;
        let m0 = 0.5 * (a[i] + a[i + 1]);
        let dm = 0.5 * (delta[i] + delta[i + 1]);
        let g0 = p.spec.g.eval(m0);
        let dg = simpson(&g_prime, m0, dm);
        let theta0 = 0.5 * (d0 * d0 + cells.nm1 * g0 * g0 * cells.inv_f2[i]);
        let dtheta = 0.5 * (dd * (2.0 * d0 + dd) + cells.nm1 * cells.inv_f2[i] * dg * (2.0 * g0 + dg));
        total += simpson(&big_g, theta0, dtheta) * cells.weight[i] * cells.h;
    }
    total
}

/// Gradient max-norm with components pushing into the `α >= 0` bound removed.
fn projected_norm(x: &[f64], grad: &[f64]) -> f64 {
    x.iter()
        .zip(grad)
        .map(|(xi, gi)| if *xi <= 0.0 && *gi > 0.0 { 0.0 } else { gi.abs() })
        .fold(0.0, f64::max)
}

/// Relative residual of the ODE at each interior node, with `α'` and `α''`
/// taken from central differences of the grid.
pub fn euler_lagrange_residuals(
    p: &DiscreteProblem,
    alpha: &[f64],
) -> Result<Vec<f64>, VariationalError> {
    p.check_len(alpha)?;
    let h = p.h();
    let full = with_boundary(p, alpha);
    let radii = p.nodes();
    Ok(full
        .windows(3)
        .zip(radii)
        .map(|(w, r)| {
            let d1 = (w[2] - w[0]) / (2.0 * h);
            let d2 = (w[2] - 2.0 * w[1] + w[0]) / (h * h);
            field::relative_residual(&p.spec, &State::new(r, w[1], d1), d2)
                .unwrap_or(f64::INFINITY)
        })
        .collect())
}
