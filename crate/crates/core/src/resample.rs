//! Seeded bootstrap and k-fold cross-validation.
//!
//! Every replicate or fold `r` draws from `ChaCha8Rng::seed_from_u64(seed)`
//! moved to stream `r`, so results do not depend on scheduling or thread
//! count. The fold permutation uses stream [`FOLD_STREAM`].

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{fmt_f64, Cohort};
use crate::decision::{apply_rule, check_phi, Decision};
use crate::empirical::ecdf_set;
use crate::error::{Error, Result};
use crate::logistic::fit_score;
use crate::roc::auc_ecdf;
use crate::select::{select_rule, Method, RiskReport, SelectionCriterion};

pub const FOLD_STREAM: u64 = u64::MAX;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub replicates: usize,
    pub folds: usize,
    pub seed: u64,
    /// Resample or split within each status separately.
    pub stratified: bool,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self { replicates: 500, folds: 10, seed: 0, stratified: false }
    }
}

/// Type-7 quantile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample standard deviation (denominator `n - 1`); zero for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Statistics the front end can bootstrap by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "statistic", rename_all = "snake_case")]
pub enum Statistic {
    /// Lower and upper cutoffs of the selected rule.
    Cutoffs { phi: f64, criterion: SelectionCriterion, method: Method },
    /// FNR, FPR, TMR and test fraction of the selected rule.
    Risk { phi: f64, criterion: SelectionCriterion, method: Method },
    Auc { phi: f64 },
}

impl Statistic {
    pub fn names(&self) -> Vec<String> {
        let v: &[&str] = match self {
            Self::Cutoffs { .. } => &["lower", "upper"],
            Self::Risk { .. } => &["fnr", "fpr", "tmr", "test_fraction"],
            Self::Auc { .. } => &["auc"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    pub fn evaluate(&self, cohort: &Cohort) -> Result<Vec<f64>> {
        match *self {
            Self::Cutoffs { phi, criterion, method } | Self::Risk { phi, criterion, method } => {
                let ecdf = ecdf_set(cohort)?;
                let fit = match method {
                    Method::Semiparametric => Some(fit_score(&cohort.scores(), &cohort.statuses())?),
                    Method::Nonparametric => None,
                };
                let sel = select_rule(&ecdf, fit.as_ref(), phi, &criterion, method)?;
                Ok(match self {
                    Self::Cutoffs { .. } => vec![sel.rule.lower, sel.rule.upper],
                    _ => vec![sel.report.fnr, sel.report.fpr, sel.report.tmr, sel.report.test_fraction],
                })
            }
            Self::Auc { phi } => Ok(vec![auc_ecdf(&ecdf_set(cohort)?, phi)?]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub statistic: String,
    pub estimate: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub replicates_used: usize,
    pub failures: usize,
}

fn resample_indices(rng: &mut ChaCha8Rng, groups: &[Vec<usize>]) -> Vec<usize> {
    let mut idx = Vec::new();
    for g in groups {
        for _ in 0..g.len() {
            idx.push(g[rng.random_range(0..g.len())]);
        }
    }
    idx
}

fn groups(cohort: &Cohort, stratified: bool) -> Vec<Vec<usize>> {
    if stratified {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, o) in cohort.observations().iter().enumerate() {
            if o.status {
                b.push(i)
            } else {
                a.push(i)
            }
        }
        vec![a, b]
    } else {
        vec![(0..cohort.n()).collect()]
    }
}

/// Bootstrap standard errors and 95% percentile intervals of each component
/// returned by `estimator`. Failed replicates are skipped and counted.
pub fn bootstrap_se<F>(cohort: &Cohort, names: &[String], estimator: F, config: &ResampleConfig) -> Result<Vec<BootstrapSummary>>
where
    F: Fn(&Cohort) -> Result<Vec<f64>> + Sync,
{
    if config.replicates < 2 {
        return Err(Error::Config("bootstrap needs at least two replicates".into()));
    }
    let estimate = estimator(cohort)?;
    if estimate.len() != names.len() {
        return Err(Error::Config("estimator output does not match statistic names".into()));
    }
    let groups = groups(cohort, config.stratified);
    let draws: Vec<Option<Vec<f64>>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(config.seed, r as u64);
            let idx = resample_indices(&mut rng, &groups);
            cohort.subset(&idx).and_then(|c| estimator(&c)).ok()
        })
        .collect();
    let ok: Vec<&Vec<f64>> = draws.iter().flatten().collect();
    let failures = config.replicates - ok.len();
    if failures * 2 > config.replicates {
        return Err(Error::TooManyFailures { failures, replicates: config.replicates });
    }
    Ok(names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut v: Vec<f64> = ok.iter().map(|d| d[j]).collect();
            let se = sample_sd(&v);
            v.sort_by(f64::total_cmp);
            BootstrapSummary {
                statistic: name.clone(),
                estimate: estimate[j],
                se,
                ci: (percentile(&v, 0.025), percentile(&v, 0.975)),
                replicates_used: ok.len(),
                failures,
            }
        })
        .collect())
}

/// Fold label of each observation: a seeded permutation dealt round-robin.
pub fn fold_assignment(cohort: &Cohort, config: &ResampleConfig) -> Result<Vec<usize>> {
    let k = config.folds;
    if k < 2 || k > cohort.n() {
        return Err(Error::Config(format!("folds must lie in [2, {}], got {k}", cohort.n())));
    }
    let mut rng = rng_for(config.seed, FOLD_STREAM);
    let mut order = Vec::with_capacity(cohort.n());
    for mut g in groups(cohort, config.stratified) {
        g.shuffle(&mut rng);
        order.extend(g);
    }
    let mut fold = vec![0; cohort.n()];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub size: usize,
    /// `None` when the held-out fold has no subject of that status.
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// Fold averages; TMR and weighted risk use the whole-cohort prevalence.
    pub report: RiskReport,
    pub folds: Vec<FoldResult>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// K-fold cross-validated error rates of the selection procedure.
pub fn kfold_cv(cohort: &Cohort, criterion: &SelectionCriterion, phi: f64, method: Method, config: &ResampleConfig) -> Result<CvReport> {
    check_phi(phi)?;
    cohort.require_both_statuses()?;
    let fold = fold_assignment(cohort, config)?;
    let folds: Vec<FoldResult> = (0..config.folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..cohort.n()).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..cohort.n()).filter(|&i| fold[i] == f).collect();
            let tc = cohort.subset(&train)?;
            let ecdf = ecdf_set(&tc)?;
            let fit = match method {
                Method::Semiparametric => Some(fit_score(&tc.scores(), &tc.statuses())?),
                Method::Nonparametric => None,
            };
            let sel = select_rule(&ecdf, fit.as_ref(), phi, criterion, method)?;
            let (mut pos, mut neg, mut fneg, mut fpos, mut tested) = (0usize, 0usize, 0usize, 0usize, 0usize);
            for &i in &test {
                let o = &cohort.observations()[i];
                let d = apply_rule(&sel.rule, o.score, Some(o.status))?;
                if o.status {
                    pos += 1;
                } else {
                    neg += 1;
                }
                match d.decision {
                    Decision::Negative if o.status => fneg += 1,
                    Decision::Positive if !o.status => fpos += 1,
                    Decision::OrderGoldStandardTest => tested += 1,
                    _ => {}
                }
            }
            Ok(FoldResult {
                fold: f,
                size: test.len(),
                fnr: (pos > 0).then(|| fneg as f64 / pos as f64),
                fpr: (neg > 0).then(|| fpos as f64 / neg as f64),
                test_fraction: tested as f64 / test.len() as f64,
            })
        })
        .collect::<Result<_>>()?;

    let fnr = mean(folds.iter().filter_map(|f| f.fnr));
    let fpr = mean(folds.iter().filter_map(|f| f.fpr));
    let p = cohort.positives() as f64 / cohort.n() as f64;
    let lambda = criterion.lambda();
    let (a, b) = (p * fnr, (1.0 - p) * fpr);
    let report = RiskReport {
        fnr,
        fpr,
        tmr: a + b,
        weighted_risk: lambda * a + (1.0 - lambda) * b,
        risk_vector: (a, b),
        test_fraction: mean(folds.iter().map(|f| f.test_fraction)),
        prevalence: p,
        lambda,
    };
    Ok(CvReport { report, folds })
}

/// One grid point of a lambda sweep: the full-cohort selection and its
/// cross-validated error rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
    pub fnr: f64,
    pub fpr: f64,
    pub test_fraction: f64,
    pub cv_fnr: f64,
    pub cv_fpr: f64,
}

/// Min-lambda selection over `grid`, each point cross-validated with the same folds.
pub fn lambda_sweep(cohort: &Cohort, phi: f64, grid: &[f64], method: Method, config: &ResampleConfig) -> Result<Vec<SweepRow>> {
    check_phi(phi)?;
    let ecdf = ecdf_set(cohort)?;
    let fit = match method {
        Method::Semiparametric => Some(fit_score(&cohort.scores(), &cohort.statuses())?),
        Method::Nonparametric => None,
    };
    grid.iter()
        .map(|&lambda| {
            let criterion = SelectionCriterion::min_lambda(lambda)?;
            let sel = select_rule(&ecdf, fit.as_ref(), phi, &criterion, method)?;
            let cv = kfold_cv(cohort, &criterion, phi, method, config)?;
            Ok(SweepRow {
                lambda,
                lower: sel.rule.lower,
                upper: sel.rule.upper,
                fnr: sel.report.fnr,
                fpr: sel.report.fpr,
                test_fraction: sel.report.test_fraction,
                cv_fnr: cv.report.fnr,
                cv_fpr: cv.report.fpr,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lambda", "lower", "upper", "fnr", "fpr", "test_fraction", "cv_fnr", "cv_fpr"])?;
    for r in rows {
        w.write_record([r.lambda, r.lower, r.upper, r.fnr, r.fpr, r.test_fraction, r.cv_fnr, r.cv_fpr].map(fmt_f64))?;
    }
    w.flush()?;
    Ok(())
}
