//! Tripartite rules `(l, u]` and the budget-constrained decision space.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cohort::Cohort;
use crate::empirical::{ecdf_set, within_budget, CdfTable, EcdfSet, BELOW_SUPPORT};
use crate::error::{Error, Result};

/// Largest cohort accepted by [`brute_force_space`].
pub const BRUTE_FORCE_LIMIT: usize = 1000;

mod cutoff_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if *v == f64::NEG_INFINITY {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// Negative at or below `lower`, positive above `upper`, gold-standard test in
/// between. A cutoff of [`BELOW_SUPPORT`] is written as `null` in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripartiteRule {
    #[serde(with = "cutoff_serde")]
    pub lower: f64,
    #[serde(with = "cutoff_serde")]
    pub upper: f64,
}

impl TripartiteRule {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper || upper == f64::INFINITY {
            return Err(Error::Config(format!("invalid rule ({lower}, {upper}]")));
        }
        Ok(Self { lower, upper })
    }

    /// The bipartite rule `(c, c]`.
    pub fn threshold(c: f64) -> Self {
        Self { lower: c, upper: c }
    }

    pub fn has_sentinel_lower(&self) -> bool {
        self.lower == BELOW_SUPPORT
    }

    /// Interval containment `(l, u] ⊆ (other.l, other.u]`.
    pub fn within(&self, other: &Self) -> bool {
        other.lower <= self.lower && self.upper <= other.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Negative,
    Positive,
    OrderGoldStandardTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub decision: Decision,
    pub resolved: Option<bool>,
}

pub fn apply_rule(rule: &TripartiteRule, score: f64, status: Option<bool>) -> Result<Diagnosis> {
    if !score.is_finite() {
        return Err(Error::Config(format!("score {score} is not finite")));
    }
    let (decision, resolved) = if score <= rule.lower {
        (Decision::Negative, None)
    } else if score <= rule.upper {
        (Decision::OrderGoldStandardTest, status)
    } else {
        (Decision::Positive, None)
    };
    Ok(Diagnosis { decision, resolved })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSpace {
    pub rules: Vec<TripartiteRule>,
    pub phi: f64,
    pub maximal: bool,
}

impl DecisionSpace {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

pub(crate) fn check_phi(phi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::Config(format!("phi must lie in [0, 1], got {phi}")));
    }
    Ok(())
}

/// Maximal feasible rules as extended-support index pairs `(l, u)`, in
/// increasing order of both indices.
pub fn maximal_rules(table: &CdfTable, phi: f64) -> Vec<(usize, usize)> {
    let m = table.len();
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let gl = table.ext_g(i);
        // first support index whose mass above l exceeds phi
        let k = table.g.partition_point(|&g| within_budget(g - gl, phi));
        let u = k.max(i);
        if out.last().map(|&(_, prev)| prev) != Some(u) {
            out.push((i, u));
        }
    }
    out
}

fn space_from_indices(table: &CdfTable, idx: &[(usize, usize)], phi: f64) -> DecisionSpace {
    let rules = idx
        .iter()
        .map(|&(l, u)| TripartiteRule { lower: table.ext_value(l), upper: table.ext_value(u) })
        .collect();
    DecisionSpace { rules, phi, maximal: true }
}

pub fn build_decision_space(ecdf: &EcdfSet, phi: f64) -> Result<DecisionSpace> {
    check_phi(phi)?;
    let table = ecdf.table();
    if table.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(space_from_indices(table, &maximal_rules(table, phi), phi))
}

/// Exhaustive enumeration of feasible pairs, keeping the undominated ones.
pub fn brute_force_space(cohort: &Cohort, phi: f64) -> Result<DecisionSpace> {
    check_phi(phi)?;
    if cohort.n() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { n: cohort.n(), limit: BRUTE_FORCE_LIMIT });
    }
    let ecdf = ecdf_set(cohort)?;
    let t = ecdf.table();
    let m = t.len();
    let feasible = |i: usize, j: usize| within_budget(t.ext_g(j) - t.ext_g(i), phi);
    let mut idx = Vec::new();
    for i in 0..=m {
        for j in i..=m {
            if !feasible(i, j) {
                continue;
            }
            let grow_down = i > 0 && feasible(i - 1, j);
            let grow_up = j < m && feasible(i, j + 1);
            if !grow_down && !grow_up {
                idx.push((i, j));
            }
        }
    }
    Ok(space_from_indices(t, &idx, phi))
}
