//! Step CDFs tabulated on a sorted support, the empirical set for a cohort,
//! and the triage operator `H_phi`.
//!
//! Cutoffs live on the *extended support* `{-inf} ∪ support`, where `-inf`
//! ([`BELOW_SUPPORT`]) stands for a cutoff below every observed score. Index
//! `0` of the extended support is that sentinel and index `k + 1` is
//! `support[k]`; all CDFs are `0` at the sentinel.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cohort::{fmt_f64, Cohort};
use crate::error::{Error, Result};

/// Cutoff value below every observed score.
pub const BELOW_SUPPORT: f64 = f64::NEG_INFINITY;

/// Slack allowed when checking `G(u) - G(l) <= phi` on CDF values that are
/// ratios of counts.
pub const BUDGET_TOL: f64 = 1e-12;

/// The budget predicate shared by every decision-space construction.
#[inline]
pub fn within_budget(mass: f64, phi: f64) -> bool {
    mass <= phi + BUDGET_TOL
}

/// A distribution function that can be evaluated anywhere on the score axis.
pub trait Cdf {
    fn cdf(&self, s: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, s: f64) -> f64 {
        self(s)
    }
}

/// Number of support points `<= s`.
fn rank(support: &[f64], s: f64) -> usize {
    support.partition_point(|&x| x <= s)
}

/// A right-continuous step CDF borrowed from a [`CdfTable`] column.
#[derive(Debug, Clone, Copy)]
pub struct StepCdf<'a> {
    support: &'a [f64],
    values: &'a [f64],
}

impl StepCdf<'_> {
    pub fn eval(&self, s: f64) -> f64 {
        match rank(self.support, s) {
            0 => 0.0,
            k => self.values[k - 1],
        }
    }
}

impl Cdf for StepCdf<'_> {
    fn cdf(&self, s: f64) -> f64 {
        self.eval(s)
    }
}

/// Status-specific and pooled CDF values at each point of a sorted support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    pub support: Vec<f64>,
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    pub g: Vec<f64>,
    pub p: f64,
}

impl CdfTable {
    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn g0_cdf(&self) -> StepCdf<'_> {
        StepCdf { support: &self.support, values: &self.g0 }
    }

    pub fn g1_cdf(&self) -> StepCdf<'_> {
        StepCdf { support: &self.support, values: &self.g1 }
    }

    pub fn g_cdf(&self) -> StepCdf<'_> {
        StepCdf { support: &self.support, values: &self.g }
    }

    /// Extended-support value at index `i` (0 is the sentinel).
    pub fn ext_value(&self, i: usize) -> f64 {
        if i == 0 {
            BELOW_SUPPORT
        } else {
            self.support[i - 1]
        }
    }

    /// Pooled CDF at extended index `i`.
    pub fn ext_g(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.g[i - 1]
        }
    }

    pub fn ext_g0(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.g0[i - 1]
        }
    }

    pub fn ext_g1(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.g1[i - 1]
        }
    }

    /// Extended index of the largest extended-support value `<= s`.
    pub fn ext_index(&self, s: f64) -> usize {
        rank(&self.support, s)
    }

    /// Smallest extended index `w` with `G(u) - G(w) <= phi`, where `u` has
    /// extended index `u_idx`.
    pub fn h_phi_index(&self, u_idx: usize, phi: f64) -> usize {
        let gu = self.ext_g(u_idx);
        if within_budget(gu, phi) {
            return 0;
        }
        // g is nondecreasing; find first support k with gu - g[k] <= phi
        let k = self.g[..u_idx].partition_point(|&gk| !within_budget(gu - gk, phi));
        k + 1
    }

    /// Largest deviation from `g = (1 - p) g0 + p g1` over the support.
    pub fn mixture_defect(&self) -> f64 {
        self.g0
            .iter()
            .zip(&self.g1)
            .zip(&self.g)
            .map(|((a, b), g)| ((1.0 - self.p) * a + self.p * b - g).abs())
            .fold(0.0, f64::max)
    }
}

/// Empirical CDFs of the score by status, the pooled CDF, and prevalence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfSet {
    table: CdfTable,
    /// Status-0 and status-1 counts at each support point.
    counts0: Vec<usize>,
    counts1: Vec<usize>,
    n0: usize,
    n1: usize,
}

impl EcdfSet {
    pub fn new(cohort: &Cohort) -> Result<Self> {
        cohort.require_both_statuses()?;
        let mut pairs: Vec<(f64, bool)> = cohort.observations().iter().map(|o| (o.score, o.status)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut support = Vec::new();
        let mut counts0 = Vec::new();
        let mut counts1 = Vec::new();
        for (s, z) in pairs {
            if support.last() != Some(&s) {
                support.push(s);
                counts0.push(0);
                counts1.push(0);
            }
            let k = support.len() - 1;
            if z {
                counts1[k] += 1;
            } else {
                counts0[k] += 1;
            }
        }
        let n1: usize = counts1.iter().sum();
        let n0: usize = counts0.iter().sum();
        let n = n0 + n1;

        let (mut c0, mut c1) = (0usize, 0usize);
        let mut g0 = Vec::with_capacity(support.len());
        let mut g1 = Vec::with_capacity(support.len());
        let mut g = Vec::with_capacity(support.len());
        for k in 0..support.len() {
            c0 += counts0[k];
            c1 += counts1[k];
            g0.push(c0 as f64 / n0 as f64);
            g1.push(c1 as f64 / n1 as f64);
            g.push((c0 + c1) as f64 / n as f64);
        }
        let p = n1 as f64 / n as f64;
        Ok(Self { table: CdfTable { support, g0, g1, g, p }, counts0, counts1, n0, n1 })
    }

    pub fn table(&self) -> &CdfTable {
        &self.table
    }

    pub fn support(&self) -> &[f64] {
        &self.table.support
    }

    pub fn p_hat(&self) -> f64 {
        self.table.p
    }

    pub fn n(&self) -> usize {
        self.n0 + self.n1
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Status-0 and status-1 counts at each support point.
    pub fn counts(&self) -> (&[usize], &[usize]) {
        (&self.counts0, &self.counts1)
    }

    pub fn g0(&self, s: f64) -> f64 {
        self.table.g0_cdf().eval(s)
    }

    pub fn g1(&self, s: f64) -> f64 {
        self.table.g1_cdf().eval(s)
    }

    pub fn g(&self, s: f64) -> f64 {
        self.table.g_cdf().eval(s)
    }

    /// Write `score,g0,g1,g` at every support point.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["score", "g0", "g1", "g"])?;
        let t = &self.table;
        for k in 0..t.len() {
            w.write_record([fmt_f64(t.support[k]), fmt_f64(t.g0[k]), fmt_f64(t.g1[k]), fmt_f64(t.g[k])])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn ecdf_set(cohort: &Cohort) -> Result<EcdfSet> {
    EcdfSet::new(cohort)
}

/// Smallest support value `w` with `G(u) - G(w) <= phi`, or
/// [`BELOW_SUPPORT`] when `G(u) <= phi`.
pub fn h_phi(u: f64, ecdf: &EcdfSet, phi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::Config(format!("phi must lie in [0, 1], got {phi}")));
    }
    if u.is_nan() {
        return Err(Error::Config("u is NaN".into()));
    }
    let t = ecdf.table();
    let u_idx = t.ext_index(u);
    Ok(t.ext_value(t.h_phi_index(u_idx, phi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cohort(scores: &[f64], z: &[bool]) -> Cohort {
        Cohort::from_scores(scores, z).unwrap()
    }

    #[test]
    fn counting_example() {
        let e = ecdf_set(&cohort(&[1.0, 2.0, 3.0, 4.0], &[false, false, false, true])).unwrap();
        assert!((e.g0(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.p_hat(), 0.25);
        assert_eq!(e.g(0.5), 0.0);
        assert_eq!(e.g(4.0), 1.0);
        assert_eq!(e.g(100.0), 1.0);
        assert_eq!(e.g(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn single_status_rejected() {
        assert!(matches!(ecdf_set(&cohort(&[1.0, 2.0], &[false, false])), Err(Error::SingleStatus)));
    }

    #[test]
    fn ties_are_counted() {
        let e = ecdf_set(&cohort(&[1.0, 1.0, 2.0, 2.0], &[false, true, false, true])).unwrap();
        assert_eq!(e.support(), &[1.0, 2.0]);
        assert_eq!(e.g(1.0), 0.5);
        assert_eq!(e.g1(1.0), 0.5);
    }

    fn ten() -> EcdfSet {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        let z: Vec<bool> = (1..=10).map(|i| i % 2 == 0).collect();
        ecdf_set(&cohort(&s, &z)).unwrap()
    }

    #[test]
    fn h_phi_examples() {
        let e = ten();
        // zero budget collapses onto u
        for k in 1..=10 {
            assert_eq!(h_phi(k as f64, &e, 0.0).unwrap(), k as f64);
        }
        assert_eq!(h_phi(7.0, &e, 0.3).unwrap(), 4.0);
        for k in 1..=10 {
            assert_eq!(h_phi(k as f64, &e, 1.0).unwrap(), BELOW_SUPPORT);
        }
        assert_eq!(h_phi(3.0, &e, 0.3).unwrap(), BELOW_SUPPORT);
        assert!(h_phi(3.0, &e, 1.5).is_err());
    }

    #[test]
    fn mixture_identity() {
        let e = ten();
        assert!(e.table().mixture_defect() <= 1e-12);
    }
}
