//! Risk of a rule and selection of the risk-minimizing rule.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{build_decision_space, check_phi, maximal_rules, DecisionSpace, TripartiteRule};
use crate::empirical::{within_budget, Cdf, CdfTable, EcdfSet, BELOW_SUPPORT};
use crate::error::{Error, Result};
use crate::logistic::LogisticFit;
use crate::tilt::{tilt_from_fit, TiltModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub fnr: f64,
    pub fpr: f64,
    pub tmr: f64,
    pub weighted_risk: f64,
    /// `(p FNR, (1 - p) FPR)`.
    pub risk_vector: (f64, f64),
    pub test_fraction: f64,
    pub prevalence: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionCriterion {
    MinTmr,
    MinLambda { lambda: f64 },
}

impl SelectionCriterion {
    pub fn min_lambda(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        Ok(Self::MinLambda { lambda })
    }

    /// Weight on the false-negative term; `0.5` for min-TMR.
    pub fn lambda(&self) -> f64 {
        match *self {
            Self::MinTmr => 0.5,
            Self::MinLambda { lambda } => lambda,
        }
    }

    fn primary(&self, r: &RiskReport) -> f64 {
        match self {
            Self::MinTmr => r.tmr,
            Self::MinLambda { .. } => r.weighted_risk,
        }
    }
}

/// Risk of `rule` under status CDFs `g0`, `g1` and prevalence `p`.
pub fn risk_report<A: Cdf + ?Sized, B: Cdf + ?Sized>(rule: &TripartiteRule, g0: &A, g1: &B, p: f64, lambda: f64) -> RiskReport {
    let fnr = g1.cdf(rule.lower);
    let fpr = 1.0 - g0.cdf(rule.upper);
    let a = p * fnr;
    let b = (1.0 - p) * fpr;
    let g = |s: f64| (1.0 - p) * g0.cdf(s) + p * g1.cdf(s);
    RiskReport {
        fnr,
        fpr,
        tmr: a + b,
        weighted_risk: lambda * a + (1.0 - lambda) * b,
        risk_vector: (a, b),
        test_fraction: (g(rule.upper) - g(rule.lower)).max(0.0),
        prevalence: p,
        lambda,
    }
}

/// Orders candidates by criterion, then TMR, then upper cutoff, then lower.
fn tie_order(c: &SelectionCriterion, x: (&TripartiteRule, &RiskReport), y: (&TripartiteRule, &RiskReport)) -> Ordering {
    c.primary(x.1)
        .total_cmp(&c.primary(y.1))
        .then(x.1.tmr.total_cmp(&y.1.tmr))
        .then(x.0.upper.total_cmp(&y.0.upper))
        .then(x.0.lower.total_cmp(&y.0.lower))
}

/// Evaluates every rule and returns the minimizer under the tie policy.
pub fn select_min_risk<A, B>(space: &DecisionSpace, g0: &A, g1: &B, p: f64, criterion: &SelectionCriterion) -> Result<(TripartiteRule, RiskReport)>
where
    A: Cdf + Sync + ?Sized,
    B: Cdf + Sync + ?Sized,
{
    let lambda = criterion.lambda();
    space
        .rules
        .par_iter()
        .map(|r| (*r, risk_report(r, g0, g1, p, lambda)))
        .min_by(|x, y| tie_order(criterion, (&x.0, &x.1), (&y.0, &y.1)))
        .ok_or(Error::EmptySpace)
}

/// Same as [`select_min_risk`] on a CDF table, for callers holding one.
pub fn select_on_table(table: &CdfTable, phi: f64, criterion: &SelectionCriterion) -> Result<(TripartiteRule, RiskReport)> {
    check_phi(phi)?;
    let idx = maximal_rules(table, phi);
    let rules = idx
        .iter()
        .map(|&(l, u)| TripartiteRule { lower: table.ext_value(l), upper: table.ext_value(u) })
        .collect();
    let space = DecisionSpace { rules, phi, maximal: true };
    select_min_risk(&space, &table.g0_cdf(), &table.g1_cdf(), table.p, criterion)
}

/// Nonparametric selection on the empirical CDFs of a cohort.
pub fn select_empirical(ecdf: &EcdfSet, phi: f64, criterion: &SelectionCriterion) -> Result<(TripartiteRule, RiskReport)> {
    let space = build_decision_space(ecdf, phi)?;
    let t = ecdf.table();
    select_min_risk(&space, &t.g0_cdf(), &t.g1_cdf(), t.p, criterion)
}

/// Outcome of the tilt-based min-TMR selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltSelection {
    /// `-b0 / b1`.
    pub center: f64,
    pub delta: f64,
    /// `center - delta` and `center + delta`, before snapping to the support.
    pub raw_lower: f64,
    pub raw_upper: f64,
    /// The rule on the support, with the same data partition as the raw rule.
    pub rule: TripartiteRule,
    /// Raw rule extends past the observed scores.
    pub clamped: bool,
    /// After clamping, the rule widened on its free side to use the whole budget.
    pub one_sided: Option<TripartiteRule>,
    pub report: RiskReport,
    pub one_sided_report: Option<RiskReport>,
}

/// Half-width of the widest symmetric window about `center` holding at most
/// a `phi` fraction of the sorted `scores`.
///
/// A score above the center enters the window `(c - s, c + s]` at
/// `s = S - c`, one at or below it just after `s = c - S`. Returns the
/// smallest half-width attaining the largest feasible count.
pub fn symmetric_half_width(scores_sorted: &[f64], center: f64, phi: f64) -> f64 {
    let n = scores_sorted.len();
    let split = scores_sorted.partition_point(|&s| s <= center);
    // distances, ascending
    let below: Vec<f64> = scores_sorted[..split].iter().rev().map(|&s| center - s).collect();
    let above: Vec<f64> = scores_sorted[split..].iter().map(|&s| s - center).collect();
    let count = |s: f64| above.partition_point(|&d| d <= s) + below.partition_point(|&d| d < s);

    let mut events: Vec<f64> = below.iter().chain(&above).cloned().collect();
    events.sort_by(f64::total_cmp);
    events.dedup();
    let mut candidates = vec![0.0];
    for (k, &d) in events.iter().enumerate() {
        candidates.push(d);
        let next = events.get(k + 1).map_or(d + 1.0 + d.abs(), |&nx| 0.5 * (d + nx));
        candidates.push(next);
    }
    candidates.sort_by(f64::total_cmp);

    let mut best = (0usize, 0.0);
    for &s in &candidates {
        let k = count(s);
        if !within_budget(k as f64 / n as f64, phi) {
            break;
        }
        if k > best.0 {
            best = (k, s);
        }
    }
    best.1
}

/// Min-TMR rule under the exponential tilt model: a window of half-width
/// `delta` about `-b0 / b1`, with risks from the tilted CDFs.
pub fn select_tilt_min_tmr(fit: &LogisticFit, ecdf: &EcdfSet, phi: f64) -> Result<TiltSelection> {
    check_phi(phi)?;
    if !fit.converged {
        return Err(Error::NotConverged { iterations: fit.iterations, gradient: fit.gradient_norm });
    }
    let b1 = fit.slope();
    if !(b1 > 0.0) {
        return Err(Error::OrderingViolated(b1));
    }
    let tilt = tilt_from_fit(fit, ecdf)?;
    tilt_selection(&tilt, fit.intercept, b1, ecdf, phi)
}

fn tilt_selection(tilt: &TiltModel, b0: f64, b1: f64, ecdf: &EcdfSet, phi: f64) -> Result<TiltSelection> {
    let t = ecdf.table();
    let (c0, c1) = ecdf.counts();
    let mut sorted = Vec::with_capacity(ecdf.n());
    for (k, &s) in t.support.iter().enumerate() {
        sorted.extend(std::iter::repeat_n(s, c0[k] + c1[k]));
    }
    let center = -b0 / b1;
    let delta = symmetric_half_width(&sorted, center, phi);
    let raw_lower = center - delta;
    let raw_upper = center + delta;
    let rule = TripartiteRule {
        lower: t.ext_value(t.ext_index(raw_lower)),
        upper: t.ext_value(t.ext_index(raw_upper)),
    };

    let m = t.len();
    let s_min = t.support[0];
    let s_max = t.support[m - 1];
    let top = raw_upper > s_max;
    let bottom = raw_lower < s_min;
    let one_sided = if top && !bottom {
        Some(TripartiteRule { lower: t.ext_value(t.h_phi_index(m, phi)), upper: s_max })
    } else if bottom && !top {
        let k = t.g.partition_point(|&g| within_budget(g, phi));
        Some(TripartiteRule { lower: BELOW_SUPPORT, upper: t.ext_value(k) })
    } else {
        None
    };

    let tt = &tilt.table;
    let report = risk_report(&rule, &tt.g0_cdf(), &tt.g1_cdf(), tt.p, 0.5);
    let one_sided_report = one_sided.map(|r| risk_report(&r, &tt.g0_cdf(), &tt.g1_cdf(), tt.p, 0.5));
    Ok(TiltSelection { center, delta, raw_lower, raw_upper, rule, clamped: top || bottom, one_sided, report, one_sided_report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Nonparametric,
    Semiparametric,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonparametric" | "np" => Ok(Self::Nonparametric),
            "semiparametric" | "sp" => Ok(Self::Semiparametric),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Selected rule with its JSON summary fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub rule: TripartiteRule,
    pub phi: f64,
    pub lambda: Option<f64>,
    pub report: RiskReport,
}

#[derive(Serialize)]
struct SelectionJson {
    #[serde(flatten)]
    rule: TripartiteRule,
    phi: f64,
    lambda: Option<f64>,
    fnr: f64,
    fpr: f64,
    tmr: f64,
    weighted_risk: f64,
    test_fraction: f64,
}

impl Selection {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SelectionJson {
            rule: self.rule,
            phi: self.phi,
            lambda: self.lambda,
            fnr: self.report.fnr,
            fpr: self.report.fpr,
            tmr: self.report.tmr,
            weighted_risk: self.report.weighted_risk,
            test_fraction: self.report.test_fraction,
        })
        .expect("plain numbers serialize")
    }
}

/// Selects a rule by either method.
///
/// The semiparametric path uses the symmetric window for min-TMR and a
/// decision-space search on the tilted CDFs for min-lambda.
pub fn select_rule(ecdf: &EcdfSet, fit: Option<&LogisticFit>, phi: f64, criterion: &SelectionCriterion, method: Method) -> Result<Selection> {
    let lambda = match criterion {
        SelectionCriterion::MinTmr => None,
        SelectionCriterion::MinLambda { lambda } => Some(*lambda),
    };
    let (rule, report) = match method {
        Method::Nonparametric => select_empirical(ecdf, phi, criterion)?,
        Method::Semiparametric => {
            let fit = fit.ok_or_else(|| Error::Config("semiparametric selection needs a logistic fit".into()))?;
            match criterion {
                SelectionCriterion::MinTmr => {
                    let s = select_tilt_min_tmr(fit, ecdf, phi)?;
                    (s.rule, s.report)
                }
                SelectionCriterion::MinLambda { .. } => {
                    let tilt = tilt_from_fit(fit, ecdf)?;
                    let space = build_decision_space(ecdf, phi)?;
                    let tt = &tilt.table;
                    select_min_risk(&space, &tt.g0_cdf(), &tt.g1_cdf(), tt.p, criterion)?
                }
            }
        }
    };
    Ok(Selection { rule, phi, lambda, report })
}

/// ROC slope at which the min-lambda rule touches the curve.
pub fn metz_slope(lambda: f64, p: f64) -> f64 {
    (1.0 - lambda) * (1.0 - p) / (lambda * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Cohort;
    use crate::empirical::ecdf_set;

    fn cohort() -> Cohort {
        let s: Vec<f64> = (1..=12).map(f64::from).collect();
        let z = [false, false, true, false, false, true, false, true, true, false, true, true];
        Cohort::from_scores(&s, &z).unwrap()
    }

    #[test]
    fn full_budget_is_error_free() {
        let e = ecdf_set(&cohort()).unwrap();
        let (rule, r) = select_empirical(&e, 1.0, &SelectionCriterion::MinTmr).unwrap();
        assert_eq!(rule.lower, BELOW_SUPPORT);
        assert_eq!((r.fnr, r.fpr, r.tmr), (0.0, 0.0, 0.0));
        assert_eq!(r.test_fraction, 1.0);
    }

    #[test]
    fn half_lambda_is_half_tmr() {
        let e = ecdf_set(&cohort()).unwrap();
        let t = e.table();
        for rule in build_decision_space(&e, 0.25).unwrap().rules {
            let r = risk_report(&rule, &t.g0_cdf(), &t.g1_cdf(), t.p, 0.5);
            assert_eq!(r.weighted_risk, r.tmr / 2.0);
            assert_eq!(r.tmr, t.p * r.fnr + (1.0 - t.p) * r.fpr);
        }
    }

    #[test]
    fn empty_space() {
        let space = DecisionSpace { rules: vec![], phi: 0.1, maximal: true };
        let g = |s: f64| s.clamp(0.0, 1.0);
        assert!(matches!(select_min_risk(&space, &g, &g, 0.5, &SelectionCriterion::MinTmr), Err(Error::EmptySpace)));
    }

    #[test]
    fn lambda_validation() {
        assert!(SelectionCriterion::min_lambda(1.2).is_err());
        assert!(SelectionCriterion::min_lambda(0.0).is_ok());
    }

    #[test]
    fn half_width_events() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(symmetric_half_width(&s, 5.5, 0.0), 0.0);
        // window (5.5 - w, 5.5 + w] holds 6 and 5 for 0.5 < w < 1.5
        assert_eq!(symmetric_half_width(&s, 5.5, 0.2), 1.0);
        // centered on a point: the point itself enters just after 0
        assert_eq!(symmetric_half_width(&s, 5.0, 0.1), 0.5);
        // whole sample
        assert!(symmetric_half_width(&s, 5.0, 1.0) > 4.0);
    }

    #[test]
    fn tilt_selection_json() {
        let c = cohort();
        let e = ecdf_set(&c).unwrap();
        let fit = crate::logistic::fit_score(&c.scores(), &c.statuses()).unwrap();
        let sel = select_rule(&e, Some(&fit), 0.25, &SelectionCriterion::MinTmr, Method::Semiparametric).unwrap();
        let j = sel.to_json();
        for key in ["lower", "upper", "phi", "lambda", "fnr", "fpr", "tmr", "weighted_risk", "test_fraction"] {
            assert!(j.get(key).is_some(), "{key}");
        }
        let ts = select_tilt_min_tmr(&fit, &e, 0.25).unwrap();
        assert!((ts.raw_lower + ts.raw_upper + 2.0 * fit.intercept / fit.slope()).abs() < 1e-9);
        assert!(ts.report.test_fraction <= 0.25 + 1e-9);
    }

    #[test]
    fn ordering_violated() {
        let s: Vec<f64> = (1..=12).map(|v| -f64::from(v)).collect();
        let z = [false, false, true, false, false, true, false, true, true, false, true, true];
        let c = Cohort::from_scores(&s, &z).unwrap();
        let fit = crate::logistic::fit_score(&c.scores(), &c.statuses()).unwrap();
        let e = ecdf_set(&c).unwrap();
        assert!(matches!(select_tilt_min_tmr(&fit, &e, 0.2), Err(Error::OrderingViolated(_))));
    }

    #[test]
    fn metz() {
        assert_eq!(metz_slope(0.5, 0.5), 1.0);
    }
}
