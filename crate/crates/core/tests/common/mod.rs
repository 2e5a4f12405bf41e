//! Test-only oracles that share nothing with the library's integration path
//! except the pointwise right-hand side.

#![allow(dead_code)]

use fharmonic::field::{self, State};
use fharmonic::profiles::ProblemSpec;

/// Classical fixed-step RK4 from the linear seed at `r0` to `r_end`.
/// Returns the samples `(r, α, α')` at every step.
pub fn rk4_reference(spec: &ProblemSpec, r0: f64, r_end: f64, h: f64) -> Vec<(f64, f64, f64)> {
    let rhs = |r: f64, y: [f64; 2]| -> [f64; 2] {
        let a2 = field::alpha_second(spec, &State::new(r, y[0], y[1])).expect("rhs");
        [y[1], a2]
    };
    let steps = ((r_end - r0) / h).ceil() as usize;
    let h = (r_end - r0) / steps as f64;
    let mut y = [spec.c * r0, spec.c];
    let mut out = Vec::with_capacity(steps + 1);
    out.push((r0, y[0], y[1]));
    for i in 0..steps {
        let r = r0 + i as f64 * h;
        let k1 = rhs(r, y);
        let k2 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
        let k3 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
        let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for j in 0..2 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        out.push((r0 + (i + 1) as f64 * h, y[0], y[1]));
    }
    out
}

/// `α(r_end)` from the reference integrator.
pub fn rk4_endpoint(spec: &ProblemSpec, r_end: f64, h: f64) -> f64 {
    rk4_reference(spec, spec.solver.eps_start, r_end, h).last().unwrap().1
}

/// Bisection on `c` over the reference integrator.
pub fn rk4_shoot(spec: &ProblemSpec, r0: f64, target: f64, h: f64) -> f64 {
    let at = |c: f64| rk4_endpoint(&spec.clone().with_slope(c), r0, h);
    let (mut lo, mut hi) = (0.0, 1.0);
    while at(hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Closed forms for `n = 2`, harmonic `F`, obtained from the holomorphic maps
/// `z ↦ c z` written in disk coordinates, where `tanh(ρ/2) = |z|` on the
/// hyperbolic plane.
pub mod planar {
    /// Hyperbolic to hyperbolic; finite only while `c tanh(r/2) < 1`.
    pub fn hyp_hyp(c: f64, r: f64) -> f64 {
        2.0 * (c * (r / 2.0).tanh()).atanh()
    }

    /// Radius at which the hyperbolic-to-hyperbolic solution leaves every
    /// compact set, for `c > 1`.
    pub fn hyp_hyp_blow_up(c: f64) -> f64 {
        2.0 * (1.0 / c).atanh()
    }

    /// Hyperbolic to Euclidean.
    pub fn hyp_euc(c: f64, r: f64) -> f64 {
        2.0 * c * (r / 2.0).tanh()
    }

    pub fn hyp_euc_prime(c: f64, r: f64) -> f64 {
        c / (r / 2.0).cosh().powi(2)
    }

    /// Euclidean to hyperbolic; blows up at `r = 2/c`.
    pub fn euc_hyp(c: f64, r: f64) -> f64 {
        2.0 * (c * r / 2.0).atanh()
    }
}
