//! Executable confrontations of each theorem's conclusion with computed
//! trajectories.
//!
//! Every checker samples the theorem's hypotheses on the range a trajectory
//! actually covers and only judges the conclusion when all of them hold.
//! Statements about unbounded behavior are observed at a finite horizon and
//! reported as such.

mod catalog;
mod checks;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use catalog::{
    run_entry, run_suite, suite_passes, Catalog, CatalogEntry, Family, UniquenessCase,
};
pub use checks::*;

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TheoremId {
    L2_1,
    L2_2,
    L2_7,
    T2_15,
    P2_24,
    T3_1,
    P3_10,
    T3_13,
    E4_1,
    T4_4,
    C4_6,
    L4_9,
    L4_11,
    L4_13,
    T4_14,
}

impl TheoremId {
    pub const ALL: [TheoremId; 15] = [
        TheoremId::L2_1,
        TheoremId::L2_2,
        TheoremId::L2_7,
        TheoremId::T2_15,
        TheoremId::P2_24,
        TheoremId::T3_1,
        TheoremId::P3_10,
        TheoremId::T3_13,
        TheoremId::E4_1,
        TheoremId::T4_4,
        TheoremId::C4_6,
        TheoremId::L4_9,
        TheoremId::L4_11,
        TheoremId::L4_13,
        TheoremId::T4_14,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::L2_1 => "L2_1",
            TheoremId::L2_2 => "L2_2",
            TheoremId::L2_7 => "L2_7",
            TheoremId::T2_15 => "T2_15",
            TheoremId::P2_24 => "P2_24",
            TheoremId::T3_1 => "T3_1",
            TheoremId::P3_10 => "P3_10",
            TheoremId::T3_13 => "T3_13",
            TheoremId::E4_1 => "E4_1",
            TheoremId::T4_4 => "T4_4",
            TheoremId::C4_6 => "C4_6",
            TheoremId::L4_9 => "L4_9",
            TheoremId::L4_11 => "L4_11",
            TheoremId::L4_13 => "L4_13",
            TheoremId::T4_14 => "T4_14",
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = String;

    fn from_str(s: &str) -> Result<TheoremId, String> {
        TheoremId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| format!("unknown theorem id '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Consistent,
    /// Hypotheses hold and the conclusion failed beyond tolerance.
    Inconsistent,
    HypothesesNotMet,
    /// Hypotheses hold but the observation cannot decide the conclusion.
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Consistent => "Consistent",
            Verdict::Inconsistent => "Inconsistent",
            Verdict::HypothesesNotMet => "HypothesesNotMet",
            Verdict::Inconclusive => "Inconclusive",
        };
        f.write_str(s)
    }
}

/// Long-range behavior of a solution between hyperbolic model spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HyperbolicClass {
    /// Converged tail below the identity.
    Bounded,
    /// The exact unit-slope ray, tracking `α = r`.
    Identity,
    /// `α > r` at every node.
    AboveIdentity,
    /// Finite horizon too short to decide.
    Unresolved,
}

impl fmt::Display for HyperbolicClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HyperbolicClass::Bounded => "Bounded",
            HyperbolicClass::Identity => "Identity",
            HyperbolicClass::AboveIdentity => "AboveIdentity",
            HyperbolicClass::Unresolved => "Unresolved",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub met: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub theorem_id: TheoremId,
    pub spec_summary: String,
    pub hypotheses_met: bool,
    pub hypotheses: Vec<Hypothesis>,
    pub conclusion_observed: bool,
    pub measured: BTreeMap<String, f64>,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class: Option<HyperbolicClass>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    /// Per-specification reports folded into this one.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub cases: Vec<VerificationReport>,
}

impl VerificationReport {
    /// Folds case reports: any `Inconsistent` wins, then any `Inconclusive`,
    /// then any `Consistent`; otherwise `HypothesesNotMet`.
    pub fn merge(
        theorem_id: TheoremId,
        spec_summary: String,
        cases: Vec<VerificationReport>,
    ) -> VerificationReport {
        let has = |v: Verdict| cases.iter().any(|c| c.verdict == v);
        let verdict = if has(Verdict::Inconsistent) {
            Verdict::Inconsistent
        } else if has(Verdict::Inconclusive) {
            Verdict::Inconclusive
        } else if has(Verdict::Consistent) {
            Verdict::Consistent
        } else {
            Verdict::HypothesesNotMet
        };
        let mut measured = BTreeMap::new();
        measured.insert("cases".to_string(), cases.len() as f64);
        for (key, v) in [
            ("consistent", Verdict::Consistent),
            ("inconsistent", Verdict::Inconsistent),
            ("inconclusive", Verdict::Inconclusive),
            ("hypotheses_not_met", Verdict::HypothesesNotMet),
        ] {
            let n = cases.iter().filter(|c| c.verdict == v).count();
            measured.insert(key.to_string(), n as f64);
        }
        VerificationReport {
            theorem_id,
            spec_summary,
            hypotheses_met: !cases.is_empty() && cases.iter().all(|c| c.hypotheses_met),
            hypotheses: Vec::new(),
            conclusion_observed: !cases.is_empty() && cases.iter().all(|c| c.conclusion_observed),
            measured,
            verdict,
            class: None,
            notes: Vec::new(),
            cases,
        }
    }
}

/// Accumulates one report; the verdict follows from the hypotheses and the
/// observed conclusion (`None` when undecidable).
pub(crate) struct Draft {
    id: TheoremId,
    summary: String,
    hypotheses: Vec<Hypothesis>,
    measured: BTreeMap<String, f64>,
    notes: Vec<String>,
    class: Option<HyperbolicClass>,
}

impl Draft {
    pub(crate) fn new(id: TheoremId, summary: impl Into<String>) -> Draft {
        Draft {
            id,
            summary: summary.into(),
            hypotheses: Vec::new(),
            measured: BTreeMap::new(),
            notes: Vec::new(),
            class: None,
        }
    }

    pub(crate) fn hyp(&mut self, name: &str, met: bool, detail: impl Into<String>) {
        self.hypotheses.push(Hypothesis {
            name: name.to_string(),
            met,
            detail: detail.into(),
        });
    }

    pub(crate) fn measure(&mut self, key: impl Into<String>, value: f64) {
        self.measured.insert(key.into(), value);
    }

    pub(crate) fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub(crate) fn class(&mut self, class: HyperbolicClass) {
        self.class = Some(class);
    }

    pub(crate) fn hypotheses_met(&self) -> bool {
        self.hypotheses.iter().all(|h| h.met)
    }

    pub(crate) fn finish(self, conclusion: Option<bool>) -> VerificationReport {
        let hypotheses_met = self.hypotheses_met();
        let verdict = match (hypotheses_met, conclusion) {
            (false, _) => Verdict::HypothesesNotMet,
            (true, Some(true)) => Verdict::Consistent,
            (true, Some(false)) => Verdict::Inconsistent,
            (true, None) => Verdict::Inconclusive,
        };
        VerificationReport {
            theorem_id: self.id,
            spec_summary: self.summary,
            hypotheses_met,
            hypotheses: self.hypotheses,
            conclusion_observed: conclusion == Some(true),
            measured: self.measured,
            verdict,
            class: self.class,
            notes: self.notes,
            cases: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(v: Verdict) -> VerificationReport {
        let mut d = Draft::new(TheoremId::L2_1, "x");
        d.hyp("h", v != Verdict::HypothesesNotMet, "");
        d.finish(match v {
            Verdict::Consistent => Some(true),
            Verdict::Inconsistent => Some(false),
            _ => None,
        })
    }

    #[test]
    fn draft_verdicts() {
        for v in [
            Verdict::Consistent,
            Verdict::Inconsistent,
            Verdict::Inconclusive,
            Verdict::HypothesesNotMet,
        ] {
            assert_eq!(leaf(v).verdict, v);
        }
        let mut d = Draft::new(TheoremId::L2_1, "x");
        d.hyp("h", false, "");
        let r = d.finish(Some(false));
        assert_eq!(r.verdict, Verdict::HypothesesNotMet);
        assert!(!r.conclusion_observed);
    }

    #[test]
    fn merge_precedence() {
        use Verdict::*;
        let m = |vs: &[Verdict]| {
            VerificationReport::merge(TheoremId::L2_1, "m".into(), vs.iter().map(|v| leaf(*v)).collect())
                .verdict
        };
        assert_eq!(m(&[Consistent, Inconclusive, Inconsistent]), Inconsistent);
        assert_eq!(m(&[Consistent, Inconclusive, HypothesesNotMet]), Inconclusive);
        assert_eq!(m(&[Consistent, HypothesesNotMet]), Consistent);
        assert_eq!(m(&[HypothesesNotMet]), HypothesesNotMet);
        assert_eq!(m(&[]), HypothesesNotMet);
    }

    #[test]
    fn ids_round_trip() {
        for id in TheoremId::ALL {
            assert_eq!(id.as_str().parse::<TheoremId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{id}\""));
        }
        assert!("T9_9".parse::<TheoremId>().is_err());
    }
}
