//! Nonlinearities `F` and warp functions `f`, `g`.
//!
//! Both are carried as plain evaluation rules: `F`, `G = dF/dx` and `dG/dx`
//! for a profile, `w`, `w'` and `w''` for a warp. Nothing is differentiated
//! symbolically; [`validate_spec`] checks the structural conditions by
//! sampling.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::solver::SolverConfig;

/// A scalar evaluation rule shared between threads.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("p-profile requires p > 2, got p = {0}")]
    InvalidExponent(f64),
    #[error("{label}: {quantity} overflows at x = {x}")]
    Overflow {
        label: String,
        quantity: &'static str,
        x: f64,
    },
    #[error("unknown profile name {0:?} (expected harmonic, p:<p>, exp)")]
    UnknownProfile(String),
    #[error("unknown warp name {0:?} (expected euclidean, hyperbolic, tanh)")]
    UnknownWarp(String),
    #[error("radial Ricci curvature needs y > 0, got y = {0}")]
    NonPositiveRadius(f64),
    #[error("radial Ricci curvature needs n >= 2, got n = {0}")]
    DimensionTooSmall(u32),
}

/// The nonlinearity `F` together with `G = dF/dx` and `dG/dx`.
#[derive(Clone)]
pub struct FProfile {
    label: String,
    f: ScalarFn,
    g: ScalarFn,
    g_prime: ScalarFn,
    log_derivative: Option<ScalarFn>,
}

impl fmt::Debug for FProfile {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt.debug_struct("FProfile").field("label", &self.label).finish()
    }
}

impl FProfile {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> FProfile {
        FProfile {
            label: label.into(),
            f: Arc::new(f),
            g: Arc::new(g),
            g_prime: Arc::new(g_prime),
            log_derivative: None,
        }
    }

    /// Attach a closed form for `(dG/dx) / G`. Profiles whose `G` overflows
    /// long before the ratio does (the exponential one) need it so that the
    /// field equation can be evaluated in normalized form.
    pub fn with_log_derivative(
        mut self,
        rule: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> FProfile {
        self.log_derivative = Some(Arc::new(rule));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn checked(&self, quantity: &'static str, x: f64, value: f64) -> Result<f64, ProfileError> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(ProfileError::Overflow {
                label: self.label.clone(),
                quantity,
                x,
            })
        }
    }

    pub fn eval_f(&self, x: f64) -> Result<f64, ProfileError> {
        self.checked("F", x, (self.f)(x))
    }

    pub fn eval_g(&self, x: f64) -> Result<f64, ProfileError> {
        self.checked("G", x, (self.g)(x))
    }

    pub fn eval_g_prime(&self, x: f64) -> Result<f64, ProfileError> {
        self.checked("dG/dx", x, (self.g_prime)(x))
    }

    /// `(dG/dx)(x) / G(x)`.
    pub fn log_derivative(&self, x: f64) -> Result<f64, ProfileError> {
        match &self.log_derivative {
            Some(rule) => self.checked("dG/dx / G", x, rule(x)),
            None => {
                let g = self.eval_g(x)?;
                let g_prime = self.eval_g_prime(x)?;
                self.checked("dG/dx / G", x, g_prime / g)
            }
        }
    }

    /// Parse a profile name: `harmonic`, `exp`, or `p:<p>`.
    pub fn from_name(name: &str) -> Result<FProfile, ProfileError> {
        let name = name.trim();
        match name {
            "harmonic" => Ok(make_harmonic_profile()),
            "exp" => Ok(make_exp_profile()),
            _ => match name.strip_prefix("p:") {
                Some(p) => {
                    let p: f64 = p
                        .trim()
                        .parse()
                        .map_err(|_| ProfileError::UnknownProfile(name.to_string()))?;
                    make_p_profile(p)
                }
                None => Err(ProfileError::UnknownProfile(name.to_string())),
            },
        }
    }
}

/// `F(x) = x`: ordinary harmonic maps.
pub fn make_harmonic_profile() -> FProfile {
    FProfile::new("harmonic", |x| x, |_| 1.0, |_| 0.0).with_log_derivative(|_| 0.0)
}

/// `F(x) = x^{p/2}`: p-harmonic maps, `p > 2`.
pub fn make_p_profile(p: f64) -> Result<FProfile, ProfileError> {
    if !(p > 2.0) || !p.is_finite() {
        return Err(ProfileError::InvalidExponent(p));
    }
    Ok(p_profile_unchecked(p))
}

pub(crate) fn p_profile_unchecked(p: f64) -> FProfile {
    let half = p / 2.0;
    FProfile::new(
        format!("p:{p}"),
        move |x| x.powf(half),
        move |x| half * x.powf(half - 1.0),
        move |x| half * (half - 1.0) * x.powf(half - 2.0),
    )
    .with_log_derivative(move |x| (half - 1.0) / x)
}

/// `F(x) = e^x`: exponentially harmonic maps.
pub fn make_exp_profile() -> FProfile {
    FProfile::new("exp", f64::exp, f64::exp, f64::exp).with_log_derivative(|_| 1.0)
}

/// A warp function `w` with its first two derivatives.
#[derive(Clone)]
pub struct Warp {
    label: String,
    w: ScalarFn,
    d1: ScalarFn,
    d2: ScalarFn,
}

impl fmt::Debug for Warp {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt.debug_struct("Warp").field("label", &self.label).finish()
    }
}

impl Warp {
    pub fn new(
        label: impl Into<String>,
        w: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Warp {
        Warp {
            label: label.into(),
            w: Arc::new(w),
            d1: Arc::new(d1),
            d2: Arc::new(d2),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        (self.w)(r)
    }

    #[inline]
    pub fn eval_d1(&self, r: f64) -> f64 {
        (self.d1)(r)
    }

    #[inline]
    pub fn eval_d2(&self, r: f64) -> f64 {
        (self.d2)(r)
    }

    pub fn from_name(name: &str) -> Result<Warp, ProfileError> {
        match name.trim() {
            "euclidean" => Ok(warp_euclidean()),
            "hyperbolic" => Ok(warp_hyperbolic()),
            "tanh" => Ok(warp_tanh()),
            other => Err(ProfileError::UnknownWarp(other.to_string())),
        }
    }
}

/// `w(r) = r`.
pub fn warp_euclidean() -> Warp {
    Warp::new("euclidean", |r| r, |_| 1.0, |_| 0.0)
}

/// `w(r) = sinh r`.
pub fn warp_hyperbolic() -> Warp {
    Warp::new("hyperbolic", f64::sinh, f64::cosh, f64::sinh)
}

/// `w(r) = tanh r`, a bounded warp.
pub fn warp_tanh() -> Warp {
    Warp::new(
        "tanh",
        f64::tanh,
        |r| {
            let sech = 1.0 / r.cosh();
            sech * sech
        },
        |r| {
            let sech = 1.0 / r.cosh();
            -2.0 * r.tanh() * sech * sech
        },
    )
}

/// Radial Ricci curvature `-(n-1) g''(y) / g(y)` of the model manifold `N(g)`.
pub fn radial_ricci(g: &Warp, n: u32, y: f64) -> Result<f64, ProfileError> {
    if n < 2 {
        return Err(ProfileError::DimensionTooSmall(n));
    }
    if !(y > 0.0) {
        return Err(ProfileError::NonPositiveRadius(y));
    }
    Ok(-((n - 1) as f64) * g.eval_d2(y) / g.eval(y))
}

/// Dimension, nonlinearity, warp pair, initial slope and horizon of one
/// initial value problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub n: u32,
    pub profile: FProfile,
    pub f: Warp,
    pub g: Warp,
    pub c: f64,
    pub r_max: f64,
    pub solver: SolverConfig,
}

impl ProblemSpec {
    pub fn new(n: u32, profile: FProfile, f: Warp, g: Warp) -> ProblemSpec {
        ProblemSpec {
            n,
            profile,
            f,
            g,
            c: 0.0,
            r_max: 10.0,
            solver: SolverConfig::default(),
        }
    }

    pub fn with_slope(mut self, c: f64) -> ProblemSpec {
        self.c = c;
        self
    }

    pub fn with_horizon(mut self, r_max: f64) -> ProblemSpec {
        self.r_max = r_max;
        self
    }

    pub fn with_solver(mut self, solver: SolverConfig) -> ProblemSpec {
        self.solver = solver;
        self
    }

    /// `n - 1` as a float.
    #[inline]
    pub fn nm1(&self) -> f64 {
        (self.n as f64) - 1.0
    }

    pub fn summary(&self) -> String {
        format!(
            "n={} F={} f={} g={} c={} r_max={}",
            self.n,
            self.profile.label(),
            self.f.label(),
            self.g.label(),
            self.c,
            self.r_max
        )
    }
}

/// One failed sampled condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub condition: String,
    pub at: Option<f64>,
}

impl fmt::Display for Violation {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.at {
            Some(x) => write!(fmt, "{} fails at x = {:e}", self.condition, x),
            None => write!(fmt, "{} fails", self.condition),
        }
    }
}

const SAMPLES_PER_DECADE: usize = 50;

/// Logarithmically spaced points on `[lo, hi]`, `per_decade` per factor 10.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let count = ((decades * per_decade as f64).round() as usize).max(1);
    (0..=count)
        .map(|i| lo * 10f64.powf(decades * i as f64 / count as f64))
        .collect()
}

/// `count` evenly spaced points from `lo` to `hi` inclusive; `[lo]` when
/// `count == 1`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| {
                if i == count - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// `count >= 2` geometrically spaced points from `lo` to `hi` inclusive.
pub fn geomspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln();
    (0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else {
                lo * (ratio * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

fn first_failure(grid: &[f64], fails: impl Fn(f64) -> bool) -> Option<f64> {
    grid.iter().copied().find(|&x| fails(x))
}

fn push_if(out: &mut Vec<Violation>, condition: &str, at: Option<f64>) {
    if let Some(x) = at {
        out.push(Violation {
            condition: condition.to_string(),
            at: Some(x),
        });
    }
}

fn profile_violations(profile: &FProfile, out: &mut Vec<Violation>) {
    let grid = log_grid(1e-3, 1e3, SAMPLES_PER_DECADE);
    // Points where the profile leaves the representable range are outside
    // its usable domain, not violations.
    let finite: Vec<f64> = grid
        .into_iter()
        .filter(|&x| {
            let h = 1e-5 * x;
            profile.eval_f(x + h).is_ok()
                && profile.eval_g(x + h).is_ok()
                && profile.eval_g_prime(x).is_ok()
        })
        .collect();

    let f = |x: f64| profile.eval_f(x).unwrap_or(f64::NAN);
    let g = |x: f64| profile.eval_g(x).unwrap_or(f64::NAN);
    let gp = |x: f64| profile.eval_g_prime(x).unwrap_or(f64::NAN);

    push_if(out, "F > 0", first_failure(&finite, |x| !(f(x) > 0.0)));
    push_if(out, "G > 0", first_failure(&finite, |x| !(g(x) > 0.0)));
    push_if(out, "dG/dx >= 0", first_failure(&finite, |x| !(gp(x) >= 0.0)));

    // Central differences at h and h/2 combined by one Richardson step: the
    // plain O(h²) difference is too coarse for e^x once x is in the hundreds.
    let consistent = |value: &dyn Fn(f64) -> f64, derivative: &dyn Fn(f64) -> f64, x: f64| {
        let h = 1e-5 * x;
        let central = |h: f64| (value(x + h) - value(x - h)) / (2.0 * h);
        let fd = (4.0 * central(h / 2.0) - central(h)) / 3.0;
        let exact = derivative(x);
        let rounding = 1e-12 * (value(x + h).abs() + value(x - h).abs()) / h;
        (fd - exact).abs() <= 1e-6 * exact.abs() + rounding
    };
    push_if(
        out,
        "G inconsistent with F",
        first_failure(&finite, |x| !consistent(&f, &g, x)),
    );
    push_if(
        out,
        "dG/dx inconsistent with G",
        first_failure(&finite, |x| !consistent(&g, &gp, x)),
    );
}

fn warp_violations(name: &str, warp: &Warp, out: &mut Vec<Violation>) {
    if warp.eval(0.0).abs() > 1e-12 {
        out.push(Violation {
            condition: format!("{name}(0) = 0"),
            at: Some(0.0),
        });
    }
    let errors: Vec<f64> = [1e-2, 1e-4, 1e-6]
        .iter()
        .map(|&h| (warp.eval(h) / h - 1.0).abs())
        .collect();
    let shrinking = errors.windows(2).all(|pair| pair[1] <= pair[0] || pair[1] < 1e-12);
    if !(shrinking && errors[2] < 1e-6) {
        out.push(Violation {
            condition: format!("{name}'(0) = 1"),
            at: Some(1e-6),
        });
    }
    let grid = log_grid(1e-6, 1e2, SAMPLES_PER_DECADE);
    push_if(
        out,
        &format!("{name} > 0"),
        first_failure(&grid, |r| !(warp.eval(r) > 0.0)),
    );
}

/// Sampled check of the structural conditions on `F`, `f`, `g` and the
/// scalar parameters. An empty list means every sampled condition holds.
pub fn validate_spec(spec: &ProblemSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.n < 1 {
        out.push(Violation {
            condition: "n >= 1".into(),
            at: None,
        });
    }
    if !(spec.c >= 0.0) || !spec.c.is_finite() {
        out.push(Violation {
            condition: "c >= 0".into(),
            at: Some(spec.c),
        });
    }
    if !(spec.r_max > 0.0) || !spec.r_max.is_finite() {
        out.push(Violation {
            condition: "r_max > 0".into(),
            at: Some(spec.r_max),
        });
    }
    profile_violations(&spec.profile, &mut out);
    warp_violations("f", &spec.f, &mut out);
    warp_violations("g", &spec.g, &mut out);
    out
}
