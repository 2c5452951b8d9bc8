//! ROC curves over the budget-feasible rule family, their areas, and the
//! plug-in variance of the area estimate.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{fmt_f64, Cohort};
use crate::decision::{check_phi, maximal_rules};
use crate::empirical::{ecdf_set, CdfTable, EcdfSet};
use crate::error::{Error, Result};
use crate::resample::{percentile, rng_for};

/// Largest tolerated `|G - (1 - p) G0 - p G1|` at support points.
pub const MIXTURE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSource {
    Nonparametric,
    Semiparametric,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// One status-0 jump of the curve: `width` is the `G0` mass at the jump,
/// `height` is `1 - G1(H(u))` and `tied_height` is `1 - G1(H(u)-)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocStep {
    pub width: f64,
    pub height: f64,
    pub tied_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub steps: Vec<RocStep>,
    pub phi: f64,
    pub source: CurveSource,
}

impl RocCurve {
    /// Area under the step curve, splitting tied steps in half.
    pub fn area(&self) -> f64 {
        self.steps.iter().map(|s| s.width * 0.5 * (s.height + s.tied_height)).sum()
    }

    /// Trapezoid area through `points`.
    pub fn trapezoid_area(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * 0.5 * (w[0].tpr + w[1].tpr)).sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["phi", "fpr", "tpr"])?;
        for p in &self.points {
            w.write_record([fmt_f64(self.phi), fmt_f64(p.fpr), fmt_f64(p.tpr)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Curve through every rule of the decision space built on `table`.
pub fn roc_curve(table: &CdfTable, phi: f64, source: CurveSource) -> Result<RocCurve> {
    check_phi(phi)?;
    if table.is_empty() {
        return Err(Error::EmptyInput);
    }
    let defect = table.mixture_defect();
    if defect > MIXTURE_TOL {
        return Err(Error::InconsistentMixture(defect));
    }
    let mut points: Vec<RocPoint> = maximal_rules(table, phi)
        .iter()
        .map(|&(l, u)| RocPoint { fpr: 1.0 - table.ext_g0(u), tpr: 1.0 - table.ext_g1(l) })
        .collect();
    if !points.iter().any(|p| p.fpr == 1.0 && p.tpr == 1.0) {
        points.push(RocPoint { fpr: 1.0, tpr: 1.0 });
    }
    points.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.tpr.total_cmp(&b.tpr)));

    let mut steps = Vec::new();
    for k in 0..table.len() {
        let width = table.g0[k] - if k == 0 { 0.0 } else { table.g0[k - 1] };
        if width <= 0.0 {
            continue;
        }
        let h = table.h_phi_index(k + 1, phi);
        let height = 1.0 - table.ext_g1(h);
        let tied_height = if h == 0 { 1.0 } else { 1.0 - table.ext_g1(h - 1) };
        steps.push(RocStep { width, height, tied_height });
    }
    Ok(RocCurve { points, steps, phi, source })
}

pub fn empirical_roc(ecdf: &EcdfSet, phi: f64) -> Result<RocCurve> {
    roc_curve(ecdf.table(), phi, CurveSource::Nonparametric)
}

/// Extended index of `H_phi(S)` for each support point, with cumulative
/// status-1 counts over the extended support.
fn h_indices(ecdf: &EcdfSet, phi: f64) -> (Vec<usize>, Vec<u64>) {
    let t = ecdf.table();
    let h = (0..t.len()).map(|k| t.h_phi_index(k + 1, phi)).collect();
    let (_, c1) = ecdf.counts();
    let mut cum1 = Vec::with_capacity(c1.len() + 1);
    cum1.push(0u64);
    for &c in c1 {
        cum1.push(cum1.last().unwrap() + c as u64);
    }
    (h, cum1)
}

/// Double-sum area estimate on an empirical CDF set, with half weight on ties.
pub fn auc_ecdf(ecdf: &EcdfSet, phi: f64) -> Result<f64> {
    check_phi(phi)?;
    let (h, cum1) = h_indices(ecdf, phi);
    let (c0, _) = ecdf.counts();
    let n1 = ecdf.n1() as u64;
    // 2 * (#{S1 > H} + 1/2 #{S1 = H}) in integers
    let mut twice: u128 = 0;
    for (k, &hk) in h.iter().enumerate() {
        if c0[k] == 0 {
            continue;
        }
        let le = cum1[hk];
        let eq = if hk == 0 { 0 } else { cum1[hk] - cum1[hk - 1] };
        twice += c0[k] as u128 * (2 * (n1 - le) + eq) as u128;
    }
    Ok(twice as f64 / (2.0 * ecdf.n0() as f64 * n1 as f64))
}

pub fn auc(cohort: &Cohort, phi: f64) -> Result<f64> {
    auc_ecdf(&ecdf_set(cohort)?, phi)
}

pub fn auc_lower_bound(phi: f64) -> Result<f64> {
    check_phi(phi)?;
    Ok(0.5 + phi - 0.5 * phi * phi)
}

fn population_variance(values: &[(f64, f64)]) -> f64 {
    // (value, weight) with weights summing to one
    let mean: f64 = values.iter().map(|(v, w)| v * w).sum();
    values.iter().map(|(v, w)| w * (v - mean) * (v - mean)).sum()
}

/// Plug-in variance of [`auc`] from the projection kernels of the double sum.
pub fn auc_variance_plugin(cohort: &Cohort, phi: f64) -> Result<f64> {
    check_phi(phi)?;
    let ecdf = ecdf_set(cohort)?;
    let (h, cum1) = h_indices(&ecdf, phi);
    let (c0, c1) = ecdf.counts();
    let (n0, n1) = (ecdf.n0() as f64, ecdf.n1() as f64);
    let m = h.len();

    // status-0 kernel: P1(S > H(s')) + P1(S = H(s')) / 2
    let mut k0 = Vec::new();
    // G0 mass carried to each extended index by H
    let mut mass_h = vec![0.0; m + 1];
    for k in 0..m {
        if c0[k] == 0 {
            continue;
        }
        let hk = h[k];
        let le = cum1[hk] as f64;
        let eq = if hk == 0 { 0.0 } else { (cum1[hk] - cum1[hk - 1]) as f64 };
        k0.push(((n1 - le + 0.5 * eq) / n1, c0[k] as f64 / n0));
        mass_h[hk] += c0[k] as f64 / n0;
    }
    // status-1 kernel: P0(H(S') < s) + P0(H(S') = s) / 2
    let mut below = vec![0.0; m + 2];
    for i in 0..=m {
        below[i + 1] = below[i] + mass_h[i];
    }
    let mut k1 = Vec::new();
    for k in 0..m {
        if c1[k] == 0 {
            continue;
        }
        let i = k + 1;
        k1.push((below[i] + 0.5 * mass_h[i], c1[k] as f64 / n1));
    }
    Ok(population_variance(&k1) / n1 + population_variance(&k0) / n0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub phi: f64,
    pub score: String,
    pub auc: f64,
}

/// Area per `phi` for each named score column on the same subjects.
pub fn auc_vs_phi(scores: &[(String, Cohort)], phis: &[f64]) -> Result<Vec<AucRow>> {
    let mut rows = Vec::new();
    for (name, cohort) in scores {
        let ecdf = ecdf_set(cohort)?;
        for &phi in phis {
            rows.push(AucRow { phi, score: name.clone(), auc: auc_ecdf(&ecdf, phi)? });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucDifference {
    pub phi: f64,
    pub difference: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// `AUC(a) - AUC(b)` per `phi` with a paired percentile bootstrap interval.
/// Both cohorts must list the same subjects in the same order.
pub fn auc_difference(a: &Cohort, b: &Cohort, phis: &[f64], replicates: usize, seed: u64) -> Result<Vec<AucDifference>> {
    if a.n() != b.n() || a.statuses() != b.statuses() {
        return Err(Error::Config("paired scores must share subjects and statuses".into()));
    }
    if replicates < 2 {
        return Err(Error::Config("at least two bootstrap replicates are required".into()));
    }
    for &phi in phis {
        check_phi(phi)?;
    }
    let (ea, eb) = (ecdf_set(a)?, ecdf_set(b)?);
    let n = a.n();
    let draws: Vec<Option<Vec<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            use rand::Rng;
            let mut rng = rng_for(seed, r as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let (ra, rb) = (ecdf_set(&a.subset(&idx).ok()?).ok()?, ecdf_set(&b.subset(&idx).ok()?).ok()?);
            phis.iter().map(|&phi| Some(auc_ecdf(&ra, phi).ok()? - auc_ecdf(&rb, phi).ok()?)).collect()
        })
        .collect();
    let ok: Vec<&Vec<f64>> = draws.iter().flatten().collect();
    if ok.len() * 2 < replicates {
        return Err(Error::TooManyFailures { failures: replicates - ok.len(), replicates });
    }
    phis.iter()
        .enumerate()
        .map(|(j, &phi)| {
            let mut d: Vec<f64> = ok.iter().map(|v| v[j]).collect();
            d.sort_by(f64::total_cmp);
            Ok(AucDifference {
                phi,
                difference: auc_ecdf(&ea, phi)? - auc_ecdf(&eb, phi)?,
                ci_lo: percentile(&d, 0.025),
                ci_hi: percentile(&d, 0.975),
            })
        })
        .collect()
}
