use rayon::prelude::*;

use super::checks::*;
use super::{Draft, TheoremId, VerificationReport, Verdict};
use crate::profiles::{linspace, FProfile, ProblemSpec, Warp};
use crate::shooting::DEFAULT_MATCH_TOL;
use crate::solver::{self, SolverConfig, Trajectory};

/// One boundary-value case for the uniqueness checker.
#[derive(Debug, Clone)]
pub struct UniquenessCase {
    pub spec: ProblemSpec,
    pub r0: f64,
    pub target: f64,
}

/// Specifications a checker is run against.
#[derive(Debug, Clone)]
pub enum Family {
    /// One trajectory per specification.
    Trajectories(Vec<ProblemSpec>),
    Decay { specs: Vec<ProblemSpec>, eps: f64 },
    Uniqueness {
        cases: Vec<UniquenessCase>,
        match_tol: f64,
        /// `(spec, R0, slopes)` for the ordering scans.
        scans: Vec<(ProblemSpec, f64, Vec<f64>)>,
    },
    /// `(spec, slopes)`; `r0` only matters for the flat-domain statement.
    Liouville {
        cases: Vec<(ProblemSpec, Vec<f64>)>,
        level: f64,
        r0: f64,
    },
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub id: TheoremId,
    pub family: Family,
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub entries: Vec<CatalogEntry>,
}

fn spec(n: u32, profile: &str, f: &str, g: &str, c: f64, r_max: f64) -> ProblemSpec {
    ProblemSpec::new(
        n,
        FProfile::from_name(profile).expect("built-in profile"),
        Warp::from_name(f).expect("built-in warp"),
        Warp::from_name(g).expect("built-in warp"),
    )
    .with_slope(c)
    .with_horizon(r_max)
}

fn grid(
    ns: &[u32],
    profiles: &[&str],
    pairs: &[(&str, &str)],
    slopes: &[f64],
    r_max: f64,
) -> Vec<ProblemSpec> {
    let mut out = Vec::new();
    for &n in ns {
        for p in profiles {
            for (f, g) in pairs {
                for &c in slopes {
                    out.push(spec(n, p, f, g, c, r_max));
                }
            }
        }
    }
    out
}

const HYP: &str = "hyperbolic";
const EUC: &str = "euclidean";
const TANH: &str = "tanh";
const PROFILES: [&str; 3] = ["harmonic", "exp", "p:4"];

impl Catalog {
    pub fn empty() -> Catalog {
        Catalog::default()
    }

    /// Specifications chosen so every statement sees cases that meet its
    /// hypotheses and, where useful, cases that do not.
    pub fn default_catalog() -> Catalog {
        let pairs = [(HYP, HYP), (HYP, EUC), (EUC, HYP), (TANH, EUC), (EUC, EUC)];
        let mut entries = Vec::new();
        let mut push = |id, family| entries.push(CatalogEntry { id, family });

        push(
            TheoremId::L2_1,
            Family::Trajectories(grid(&[2], &PROFILES, &pairs, &[0.5, 1.0, 1.5], 10.0)),
        );
        push(
            TheoremId::L2_2,
            Family::Trajectories(grid(&[1], &PROFILES, &[(HYP, HYP), (EUC, TANH)], &[0.3, 1.0, 2.0], 5.0)),
        );
        push(
            TheoremId::L2_7,
            Family::Trajectories(grid(
                &[2, 3, 5],
                &PROFILES,
                &[(HYP, HYP), (HYP, EUC), (EUC, HYP)],
                &[0.3, 1.0],
                1.0,
            )),
        );

        let uniqueness = vec![
            UniquenessCase { spec: spec(2, "harmonic", EUC, EUC, 1.0, 3.0), r0: 3.0, target: 1.5 },
            UniquenessCase { spec: spec(2, "harmonic", HYP, HYP, 1.0, 2.0), r0: 2.0, target: 2.0 },
            UniquenessCase { spec: spec(3, "harmonic", HYP, EUC, 1.0, 2.0), r0: 2.0, target: 1.0 },
            UniquenessCase { spec: spec(2, "exp", HYP, EUC, 1.0, 2.0), r0: 2.0, target: 1.0 },
            UniquenessCase { spec: spec(2, "p:4", HYP, HYP, 1.0, 2.0), r0: 2.0, target: 1.0 },
        ];
        let scans = vec![
            (spec(2, "harmonic", HYP, EUC, 1.0, 2.0), 2.0, linspace(0.1, 2.0, 20)),
            (spec(2, "exp", HYP, HYP, 1.0, 2.0), 2.0, linspace(0.05, 1.0, 20)),
        ];
        push(
            TheoremId::T2_15,
            Family::Uniqueness { cases: uniqueness, match_tol: DEFAULT_MATCH_TOL, scans },
        );

        push(
            TheoremId::P2_24,
            Family::Trajectories(grid(&[2], &PROFILES, &[(HYP, HYP)], &[0.8, 0.9, 1.0, 1.1, 1.2], 10.0)),
        );

        let liouville = vec![
            (spec(2, "harmonic", EUC, HYP, 1.0, 50.0), vec![0.0, 0.1, 0.5, 1.0, 2.0]),
            (spec(3, "harmonic", EUC, HYP, 1.0, 50.0), vec![0.1, 1.0]),
            (spec(2, "exp", EUC, EUC, 1.0, 50.0), vec![0.0, 0.25, 0.5, 1.0, 2.0]),
            (spec(2, "p:4", EUC, HYP, 1.0, 50.0), vec![0.1, 0.5, 1.0]),
        ];
        push(
            TheoremId::T3_1,
            Family::Liouville { cases: liouville, level: DEFAULT_UNBOUNDED_LEVEL, r0: 0.0 },
        );

        push(
            TheoremId::P3_10,
            Family::Trajectories(grid(&[2], &["exp", "harmonic"], &[(HYP, HYP), (EUC, HYP)], &[0.5, 1.0], 10.0)),
        );

        let far = SolverConfig {
            blowup_threshold: 1e30,
            ..SolverConfig::default()
        };
        let flat: Vec<_> = grid(&[2, 3], &["harmonic", "exp"], &[(TANH, EUC)], &[1.0], 50.0)
            .into_iter()
            .map(|s| (s.with_solver(far), vec![0.5, 1.0, 2.0]))
            .collect();
        push(
            TheoremId::T3_13,
            Family::Liouville { cases: flat, level: DEFAULT_UNBOUNDED_LEVEL, r0: 1.0 },
        );

        push(
            TheoremId::E4_1,
            Family::Trajectories(
                [
                    grid(&[2, 3], &PROFILES, &[(HYP, EUC), (HYP, HYP), (TANH, EUC)], &[0.5, 1.2], 8.0),
                    grid(&[4], &PROFILES, &[(EUC, HYP)], &[0.7], 3.0),
                ]
                .concat(),
            ),
        );

        let mut decay = grid(&[2], &["harmonic", "exp"], &[(HYP, EUC)], &[0.5, 1.0, 2.0], 20.0);
        decay.push(spec(2, "harmonic", HYP, TANH, 1.0, 20.0));
        decay.push(spec(2, "harmonic", EUC, EUC, 1.0, 20.0));
        push(TheoremId::T4_4, Family::Decay { specs: decay, eps: 0.1 });

        push(
            TheoremId::L4_9,
            Family::Trajectories(grid(
                &[2],
                &["harmonic", "exp"],
                &[(HYP, HYP)],
                &[0.5, 0.8, 0.9, 0.95, 0.99, 1.0, 1.1],
                MIN_HYPERBOLIC_HORIZON,
            )),
        );

        Catalog { entries }
    }

    /// Entries whose checker covers any of `ids`. Decay and hyperbolic
    /// entries cover all the statements they report on.
    pub fn only(self, ids: &[TheoremId]) -> Catalog {
        let entries = self
            .entries
            .into_iter()
            .filter(|e| covered(e.id).iter().any(|id| ids.contains(id)))
            .collect();
        Catalog { entries }
    }

    pub fn with_match_tol(mut self, tol: f64) -> Catalog {
        for e in &mut self.entries {
            if let Family::Uniqueness { match_tol, .. } = &mut e.family {
                *match_tol = tol;
            }
        }
        self
    }

    /// Every single-trajectory specification in the catalog.
    pub fn trajectory_specs(&self) -> Vec<&ProblemSpec> {
        self.entries
            .iter()
            .flat_map(|e| match &e.family {
                Family::Trajectories(specs) | Family::Decay { specs, .. } => specs.iter().collect(),
                _ => Vec::new(),
            })
            .collect()
    }
}

/// Statements reported by the checker an entry id dispatches to.
fn covered(id: TheoremId) -> Vec<TheoremId> {
    match id {
        TheoremId::T4_4 | TheoremId::C4_6 => vec![TheoremId::T4_4, TheoremId::C4_6],
        TheoremId::L4_9 | TheoremId::L4_11 | TheoremId::L4_13 | TheoremId::T4_14 => vec![
            TheoremId::L4_9,
            TheoremId::L4_11,
            TheoremId::L4_13,
            TheoremId::T4_14,
        ],
        other => vec![other],
    }
}

fn solve_failed(id: TheoremId, spec: &ProblemSpec, err: impl std::fmt::Display) -> VerificationReport {
    let mut d = Draft::new(id, spec.summary());
    d.hyp("trajectory available", false, err.to_string());
    d.finish(None)
}

fn trajectory_for(id: TheoremId, spec: &ProblemSpec) -> Result<Trajectory, solver::SolveError> {
    match id {
        TheoremId::L2_2 => solver::integrate(spec),
        _ => solver::solve(spec),
    }
}

fn trajectory_reports(id: TheoremId, spec: &ProblemSpec) -> Vec<VerificationReport> {
    let traj = match trajectory_for(id, spec) {
        Ok(t) => t,
        Err(err) => {
            return covered(id)
                .into_iter()
                .map(|i| solve_failed(i, spec, &err))
                .collect()
        }
    };
    match id {
        TheoremId::L2_1 => vec![check_monotone(&traj)],
        TheoremId::L2_2 => vec![check_linear_n1(&traj)],
        TheoremId::L2_7 => vec![check_unique_continuation(&traj)],
        TheoremId::P2_24 => vec![check_trichotomy(&traj)],
        TheoremId::P3_10 => vec![check_derivative_bound(&traj)],
        TheoremId::E4_1 => vec![check_theta_identity(&traj)],
        TheoremId::T4_4 | TheoremId::C4_6 => check_decay(&traj, 0.1),
        TheoremId::L4_9 | TheoremId::L4_11 | TheoremId::L4_13 | TheoremId::T4_14 => {
            check_hyperbolic_boundedness(&traj)
        }
        other => vec![solve_failed(other, spec, "statement needs a family, not a trajectory")],
    }
}

/// Runs one entry and folds its cases into one report per covered statement.
pub fn run_entry(entry: &CatalogEntry) -> Vec<VerificationReport> {
    let ids = covered(entry.id);
    let per_case: Vec<Vec<VerificationReport>> = match &entry.family {
        Family::Trajectories(specs) => specs
            .par_iter()
            .map(|s| trajectory_reports(entry.id, s))
            .collect(),
        Family::Decay { specs, eps } => specs
            .par_iter()
            .map(|s| match solver::solve(s) {
                Ok(t) => check_decay(&t, *eps),
                Err(err) => ids.iter().map(|&i| solve_failed(i, s, &err)).collect(),
            })
            .collect(),
        Family::Uniqueness { cases, match_tol, scans } => {
            let mut out: Vec<Vec<VerificationReport>> = cases
                .par_iter()
                .map(|c| vec![check_uniqueness(&c.spec, c.r0, c.target, *match_tol)])
                .collect();
            out.extend(scans.iter().map(|(s, r0, cs)| vec![check_non_crossing(s, *r0, cs)]));
            out
        }
        Family::Liouville { cases, level, r0 } => cases
            .par_iter()
            .map(|(s, cs)| match entry.id {
                TheoremId::T3_13 => vec![check_liouville_flat(s, cs, *r0, *level)],
                _ => vec![check_liouville_a(s, cs, *level)],
            })
            .collect(),
    };
    ids.iter()
        .map(|&id| {
            let cases: Vec<VerificationReport> = per_case
                .iter()
                .flatten()
                .filter(|r| r.theorem_id == id)
                .cloned()
                .collect();
            let summary = format!("{} cases", cases.len());
            VerificationReport::merge(id, summary, cases)
        })
        .collect()
}

/// All entries in parallel; reports keep catalog order.
pub fn run_suite(catalog: &Catalog) -> Vec<VerificationReport> {
    catalog
        .entries
        .par_iter()
        .map(run_entry)
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// True when no report is `Inconsistent`.
pub fn suite_passes(reports: &[VerificationReport]) -> bool {
    reports.iter().all(|r| r.verdict != Verdict::Inconsistent)
}
