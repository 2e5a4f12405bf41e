//! Pointwise evaluation of the rotationally symmetric F-harmonic map equation.
//!
//! For a state `(r, α, α')` the energy density is
//! `θ = ½[α'² + (n-1) g(α)²/f(r)²]`, and the equation is
//!
//! ```text
//! G(θ) α'' + [(n-1) G(θ) f'/f + d/dr G(θ)] α' - (n-1) G(θ) g g'/f² = 0.
//! ```
//!
//! The second derivative is obtained from the explicit form in which the
//! `d/dr G(θ)` term has been expanded with the chain rule and moved to the
//! left, so that `α''` is multiplied by the principal coefficient
//! `A = G(θ) + (dG/dx)(θ) α'²`. Everything here is evaluated after dividing
//! through by `G(θ)`, which keeps the exponential profile finite well past
//! the point where `e^θ` itself overflows.

use thiserror::Error;

use crate::profiles::{ProblemSpec, ProfileError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("state radius must be positive, got r = {0}")]
    NonPositiveRadius(f64),
    #[error("principal coefficient degenerates at r = {r}: A = {a:e}, G = {g:e}")]
    DegenerateCoefficient { r: f64, a: f64, g: f64 },
    #[error("warp evaluation overflows at r = {r}, alpha = {alpha}")]
    WarpOverflow { r: f64, alpha: f64 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Radius, target radius and slope at one point of a profile curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub r: f64,
    pub alpha: f64,
    pub alpha_prime: f64,
}

impl State {
    pub fn new(r: f64, alpha: f64, alpha_prime: f64) -> State {
        State {
            r,
            alpha,
            alpha_prime,
        }
    }
}

/// Every derived pointwise quantity at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldEval {
    pub theta: f64,
    /// `G(θ)`; `+inf` when it is not representable.
    pub g_theta: f64,
    /// `(dG/dx)(θ)`; `+inf` when it is not representable.
    pub g_prime_theta: f64,
    /// Principal coefficient `G + (dG/dx) α'²`; `+inf` when `G` overflows.
    pub a: f64,
    pub alpha_second: f64,
    pub theta_prime: f64,
}

/// Geometric ratios at a state: `k = f'/f`, `q = g g'/f²`, `s = g²/f²`.
#[derive(Debug, Clone, Copy)]
struct Ratios {
    k: f64,
    q: f64,
    s: f64,
}

fn ratios(spec: &ProblemSpec, st: &State) -> Result<Ratios, FieldError> {
    if !(st.r > 0.0) {
        return Err(FieldError::NonPositiveRadius(st.r));
    }
    let f = spec.f.eval(st.r);
    let fp = spec.f.eval_d1(st.r);
    let g_over_f = spec.g.eval(st.alpha) / f;
    let gp_over_f = spec.g.eval_d1(st.alpha) / f;
    let out = Ratios {
        k: fp / f,
        q: g_over_f * gp_over_f,
        s: g_over_f * g_over_f,
    };
    if out.k.is_finite() && out.q.is_finite() && out.s.is_finite() {
        Ok(out)
    } else {
        Err(FieldError::WarpOverflow {
            r: st.r,
            alpha: st.alpha,
        })
    }
}

fn theta_from(spec: &ProblemSpec, st: &State, rt: &Ratios) -> f64 {
    0.5 * (st.alpha_prime * st.alpha_prime + spec.nm1() * rt.s)
}

/// Coefficients after division by `G(θ)`.
struct Normalized {
    rt: Ratios,
    theta: f64,
    /// `(dG/dx) / G` at θ.
    ratio: f64,
    g: f64,
    g_prime: f64,
    /// `A / G`.
    a_over_g: f64,
}

fn normalized(spec: &ProblemSpec, st: &State) -> Result<Normalized, FieldError> {
    let rt = ratios(spec, st)?;
    let theta = theta_from(spec, st, &rt);
    let g = spec.profile.eval_g(theta).ok();
    let g_prime = spec.profile.eval_g_prime(theta).ok();
    let ap2 = st.alpha_prime * st.alpha_prime;

    if let (Some(g), Some(g_prime)) = (g, g_prime) {
        let a = g + g_prime * ap2;
        if !(a > 1e-14 * g.max(1.0)) {
            return Err(FieldError::DegenerateCoefficient { r: st.r, a, g });
        }
    }
    // A non-representable G(θ) is tolerated as long as the ratio is finite.
    let ratio = spec.profile.log_derivative(theta)?;
    Ok(Normalized {
        rt,
        theta,
        ratio,
        g: g.unwrap_or(f64::INFINITY),
        g_prime: g_prime.unwrap_or(f64::INFINITY),
        a_over_g: 1.0 + ratio * ap2,
    })
}

fn alpha_second_from(spec: &ProblemSpec, st: &State, nz: &Normalized) -> f64 {
    let nm1 = spec.nm1();
    let Ratios { k, q, s } = nz.rt;
    let ap = st.alpha_prime;
    let numerator = -nm1 * nz.ratio * q * ap * ap - nm1 * k * (1.0 - nz.ratio * s) * ap + nm1 * q;
    numerator / nz.a_over_g
}

fn theta_prime_from(spec: &ProblemSpec, st: &State, nz: &Normalized) -> f64 {
    let Ratios { k, q, s } = nz.rt;
    let ap = st.alpha_prime;
    spec.nm1() * (2.0 * q * ap - k * (s + ap * ap)) / nz.a_over_g
}

/// `θ` at a state.
pub fn energy_density(spec: &ProblemSpec, st: &State) -> Result<f64, FieldError> {
    let rt = ratios(spec, st)?;
    Ok(theta_from(spec, st, &rt))
}

/// `α''` from the explicit (principal-coefficient) form of the equation.
pub fn alpha_second(spec: &ProblemSpec, st: &State) -> Result<f64, FieldError> {
    let nz = normalized(spec, st)?;
    Ok(alpha_second_from(spec, st, &nz))
}

/// `θ'` from the first-order energy identity, in which `G α''` has been
/// eliminated using the equation.
pub fn theta_prime(spec: &ProblemSpec, st: &State) -> Result<f64, FieldError> {
    let nz = normalized(spec, st)?;
    Ok(theta_prime_from(spec, st, &nz))
}

/// The two factors of [`theta_prime`]: the bracket
/// `B = (n-1){2 g g' α'/f² - (f'/f)(g²/f² + α'²)}` and `G/A ∈ (0, 1]`.
pub fn theta_prime_factors(spec: &ProblemSpec, st: &State) -> Result<(f64, f64), FieldError> {
    let nz = normalized(spec, st)?;
    let Ratios { k, q, s } = nz.rt;
    let ap = st.alpha_prime;
    let b = spec.nm1() * (2.0 * q * ap - k * (s + ap * ap));
    Ok((b, 1.0 / nz.a_over_g))
}

/// `θ'` by differentiating `θ` directly along a curve with the given `α''`.
pub fn theta_prime_chain(
    spec: &ProblemSpec,
    st: &State,
    alpha_second_val: f64,
) -> Result<f64, FieldError> {
    let rt = ratios(spec, st)?;
    Ok(chain(spec, st, &rt, alpha_second_val))
}

fn chain(spec: &ProblemSpec, st: &State, rt: &Ratios, alpha_second_val: f64) -> f64 {
    st.alpha_prime * alpha_second_val + spec.nm1() * (rt.q * st.alpha_prime - rt.s * rt.k)
}

/// Left-hand side of the equation in its original divergence-like form,
/// with `d/dr G(θ)` expanded as `(dG/dx)(θ) θ'` and `θ'` taken along a curve
/// whose second derivative at `st` is `alpha_second_val`.
pub fn residual(spec: &ProblemSpec, st: &State, alpha_second_val: f64) -> Result<f64, FieldError> {
    let rt = ratios(spec, st)?;
    let theta = theta_from(spec, st, &rt);
    let g = spec.profile.eval_g(theta)?;
    let g_prime = spec.profile.eval_g_prime(theta)?;
    let dg_dr = g_prime * chain(spec, st, &rt, alpha_second_val);
    let nm1 = spec.nm1();
    Ok(g * alpha_second_val + (nm1 * g * rt.k + dg_dr) * st.alpha_prime - nm1 * g * rt.q)
}

/// The residual divided by `G(θ)` and by the magnitude of its terms: a
/// scale-free measure in `[0, 1]` (up to rounding) that stays finite when
/// `G(θ)` does not.
pub fn relative_residual(
    spec: &ProblemSpec,
    st: &State,
    alpha_second_val: f64,
) -> Result<f64, FieldError> {
    let rt = ratios(spec, st)?;
    let theta = theta_from(spec, st, &rt);
    let ratio = spec.profile.log_derivative(theta)?;
    let nm1 = spec.nm1();
    let terms = [
        alpha_second_val,
        nm1 * rt.k * st.alpha_prime,
        ratio * chain(spec, st, &rt, alpha_second_val) * st.alpha_prime,
        -nm1 * rt.q,
    ];
    let sum: f64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|t| t.abs()).sum();
    Ok(sum / scale.max(1.0))
}

/// All pointwise quantities at once.
pub fn evaluate(spec: &ProblemSpec, st: &State) -> Result<FieldEval, FieldError> {
    let nz = normalized(spec, st)?;
    let ap2 = st.alpha_prime * st.alpha_prime;
    Ok(FieldEval {
        theta: nz.theta,
        g_theta: nz.g,
        g_prime_theta: nz.g_prime,
        a: nz.g + nz.g_prime * ap2,
        alpha_second: alpha_second_from(spec, st, &nz),
        theta_prime: theta_prime_from(spec, st, &nz),
    })
}
