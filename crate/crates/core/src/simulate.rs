//! Gamma-mixture CD4 scenarios, exact optima on the integer CD4 grid, and
//! the Monte Carlo study harnesses.
//!
//! CD4 is `ceil(W)` with `W ~ Gamma(shape, scale)` given status, and the risk
//! score is `-CD4`. On this integer support a score rule `(l, u]` tests
//! subjects with CD4 in `(-u - 1, -l - 1]`, which is how cutoffs are reported
//! on the CD4 scale; a below-support lower cutoff maps to the largest CD4.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{fmt_f64, Cohort};
use crate::decision::{apply_rule, check_phi, Decision, TripartiteRule};
use crate::empirical::{ecdf_set, CdfTable};
use crate::error::{Error, Result};
use crate::logistic::fit_score;
use crate::resample::{rng_for, sample_sd};
use crate::select::{select_empirical, select_on_table, select_tilt_min_tmr, RiskReport, SelectionCriterion};
use crate::special::{gamma_q, ln_gamma};

/// Smallest CD4 grid used for exact optima.
pub const MIN_GRID: u32 = 5000;
/// Tail mass left beyond the exact grid.
pub const GRID_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaScenario {
    pub name: String,
    pub eta0: f64,
    pub kappa0: f64,
    pub eta1: f64,
    pub kappa1: f64,
    pub p: f64,
}

impl GammaScenario {
    pub fn new(name: &str, eta0: f64, kappa0: f64, eta1: f64, kappa1: f64, p: f64) -> Result<Self> {
        if [eta0, kappa0, eta1, kappa1].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("gamma parameters must be positive".into()));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Config(format!("p must lie in (0, 1), got {p}")));
        }
        Ok(Self { name: name.to_string(), eta0, kappa0, eta1, kappa1, p })
    }

    /// Named preset `A-1`, `A-2`, `B-1` or `B-2` at prevalence `p`.
    pub fn preset(name: &str, p: f64) -> Result<Self> {
        let (e0, k0, e1, k1) = match name {
            "A-1" => (3.2, 152.0, 2.3, 133.0),
            "A-2" => (4.8, 100.0, 2.3, 133.0),
            "B-1" => (2.8, 173.0, 2.8, 111.0),
            "B-2" => (2.8, 350.0, 2.8, 111.0),
            other => return Err(Error::Config(format!("unknown scenario `{other}`"))),
        };
        Self::new(name, e0, k0, e1, k1, p)
    }

    pub fn preset_names() -> [&'static str; 4] {
        ["A-1", "A-2", "B-1", "B-2"]
    }

    fn shape_scale(&self, status: bool) -> (f64, f64) {
        if status {
            (self.eta1, self.kappa1)
        } else {
            (self.eta0, self.kappa0)
        }
    }

    /// `Pr(CD4 <= k | status)`.
    pub fn cd4_cdf(&self, k: f64, status: bool) -> Result<f64> {
        if k < 0.0 {
            return Ok(0.0);
        }
        let (a, s) = self.shape_scale(status);
        crate::special::gamma_p(a, k.floor() / s)
    }
}

pub fn sample_with_rng(scenario: &GammaScenario, n: usize, rng: &mut ChaCha8Rng) -> Result<Cohort> {
    let g0 = Gamma::new(scenario.eta0, scenario.kappa0).map_err(|e| Error::Config(e.to_string()))?;
    let g1 = Gamma::new(scenario.eta1, scenario.kappa1).map_err(|e| Error::Config(e.to_string()))?;
    let mut scores = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    for _ in 0..n {
        let z = rng.random_bool(scenario.p);
        let w: f64 = if z { g1.sample(rng) } else { g0.sample(rng) };
        scores.push(-w.ceil());
        status.push(z);
    }
    Cohort::from_scores(&scores, &status)
}

/// `n` subjects from `scenario`; the same seed gives the same cohort.
pub fn sample_scenario(scenario: &GammaScenario, n: usize, seed: u64) -> Result<Cohort> {
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    sample_with_rng(scenario, n, &mut rng_for(seed, 0))
}

/// CD4 interval tested by a score rule on the integer support.
pub fn cd4_interval(rule: &TripartiteRule, max_cd4: f64) -> (f64, f64) {
    let conv = |s: f64| if s == f64::NEG_INFINITY { max_cd4 } else { -s - 1.0 };
    (conv(rule.upper), conv(rule.lower))
}

/// Largest CD4 value retained on the exact grid.
pub fn grid_size(scenario: &GammaScenario) -> Result<u32> {
    let mut k = MIN_GRID;
    while gamma_q(scenario.eta0, k as f64 / scenario.kappa0)? > GRID_TAIL || gamma_q(scenario.eta1, k as f64 / scenario.kappa1)? > GRID_TAIL {
        k += 1000;
    }
    Ok(k)
}

/// Exact score CDFs on the support `-K, ..., -1`.
pub fn analytic_table(scenario: &GammaScenario) -> Result<CdfTable> {
    let big_k = grid_size(scenario)?;
    let p = scenario.p;
    let mut support = Vec::with_capacity(big_k as usize);
    let mut g0 = Vec::with_capacity(big_k as usize);
    let mut g1 = Vec::with_capacity(big_k as usize);
    let mut g = Vec::with_capacity(big_k as usize);
    for k in (1..=big_k).rev() {
        // Pr(-CD4 <= -k) = Pr(CD4 >= k) = Q(eta, (k - 1) / kappa)
        let a = gamma_q(scenario.eta0, (k - 1) as f64 / scenario.kappa0)?;
        let b = gamma_q(scenario.eta1, (k - 1) as f64 / scenario.kappa1)?;
        support.push(-(k as f64));
        g0.push(a);
        g1.push(b);
        g.push((1.0 - p) * a + p * b);
    }
    Ok(CdfTable { support, g0, g1, g, p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueOptimum {
    pub rule: TripartiteRule,
    pub report: RiskReport,
    pub cd4_lower: f64,
    pub cd4_upper: f64,
}

pub fn true_optimum(scenario: &GammaScenario, phi: f64, criterion: &SelectionCriterion) -> Result<TrueOptimum> {
    let table = analytic_table(scenario)?;
    true_optimum_on(&table, phi, criterion)
}

pub fn true_optimum_on(table: &CdfTable, phi: f64, criterion: &SelectionCriterion) -> Result<TrueOptimum> {
    let (rule, report) = select_on_table(table, phi, criterion)?;
    let max_cd4 = -table.support[0];
    let (cd4_lower, cd4_upper) = cd4_interval(&rule, max_cd4);
    Ok(TrueOptimum { rule, report, cd4_lower, cd4_upper })
}

/// Misclassification fraction of `rule` on `cohort`; tested subjects count as correct.
pub fn misclassification(rule: &TripartiteRule, cohort: &Cohort) -> Result<f64> {
    let mut wrong = 0usize;
    for o in cohort.observations() {
        match apply_rule(rule, o.score, None)?.decision {
            Decision::Negative if o.status => wrong += 1,
            Decision::Positive if !o.status => wrong += 1,
            _ => {}
        }
    }
    Ok(wrong as f64 / cohort.n() as f64)
}

/// Per-replicate outcome of one study cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub np_lower: f64,
    pub np_upper: f64,
    pub np_tmr: f64,
    pub sp_lower: f64,
    pub sp_upper: f64,
    pub sp_tmr: f64,
    pub sp_clamped: bool,
    pub sp1_lower: f64,
    pub sp1_upper: f64,
    pub sp1_tmr: f64,
}

/// Train on the first half of `cohort`, evaluate min-TMR rules on the rest.
pub fn split_half_outcome(cohort: &Cohort, phi: f64) -> Result<ReplicateOutcome> {
    let n = cohort.n();
    let half = n / 2;
    let train = cohort.subset(&(0..half).collect::<Vec<_>>())?;
    let test = cohort.subset(&(half..n).collect::<Vec<_>>())?;
    let ecdf = ecdf_set(&train)?;
    let max_cd4 = -ecdf.support()[0];

    let (np_rule, _) = select_empirical(&ecdf, phi, &SelectionCriterion::MinTmr)?;
    let (np_lower, np_upper) = cd4_interval(&np_rule, max_cd4);

    let fit = fit_score(&train.scores(), &train.statuses())?;
    let sp = select_tilt_min_tmr(&fit, &ecdf, phi)?;
    let (sp_lower, sp_upper) = cd4_interval(&sp.rule, max_cd4);
    let sp1 = sp.one_sided.unwrap_or(sp.rule);
    let (sp1_lower, sp1_upper) = cd4_interval(&sp1, max_cd4);

    Ok(ReplicateOutcome {
        np_lower,
        np_upper,
        np_tmr: misclassification(&np_rule, &test)?,
        sp_lower,
        sp_upper,
        sp_tmr: misclassification(&sp.rule, &test)?,
        sp_clamped: sp.clamped,
        sp1_lower,
        sp1_upper,
        sp1_tmr: misclassification(&sp1, &test)?,
    })
}

/// One study cell: scenario, prevalence, budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub scenario: String,
    pub p: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub scenario: String,
    pub p: f64,
    pub phi: f64,
    pub true_lower: f64,
    pub true_upper: f64,
    pub true_tmr: f64,
    pub np_lower_mean: f64,
    pub np_lower_sd: f64,
    pub np_upper_mean: f64,
    pub np_upper_sd: f64,
    pub np_tmr_mean: f64,
    pub sp_lower_mean: f64,
    pub sp_lower_sd: f64,
    pub sp_upper_mean: f64,
    pub sp_upper_sd: f64,
    pub sp_tmr_mean: f64,
    pub sp1_lower_mean: f64,
    pub sp1_upper_mean: f64,
    pub sp1_tmr_mean: f64,
    pub clamped: usize,
    pub replicates_used: usize,
    pub failures: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Monte Carlo cell: `replicates` cohorts of size `n`, each split in half.
/// Replicate `r` of cell `c` draws from stream `(c << 32) | r`.
pub fn run_cell(cell: &StudyCell, cell_index: u64, replicates: usize, n: usize, seed: u64) -> Result<StudyRow> {
    if replicates < 2 {
        return Err(Error::Config("at least two replicates are required".into()));
    }
    if n < 4 {
        return Err(Error::Config("n must be at least 4".into()));
    }
    check_phi(cell.phi)?;
    let scenario = GammaScenario::preset(&cell.scenario, cell.p)?;
    let truth = true_optimum(&scenario, cell.phi, &SelectionCriterion::MinTmr)?;
    let outcomes: Vec<Option<ReplicateOutcome>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(seed, (cell_index << 32) | r as u64);
            let cohort = sample_with_rng(&scenario, n, &mut rng).ok()?;
            split_half_outcome(&cohort, cell.phi).ok()
        })
        .collect();
    let ok: Vec<ReplicateOutcome> = outcomes.into_iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::TooManyFailures { failures: replicates, replicates });
    }
    let col = |f: fn(&ReplicateOutcome) -> f64| ok.iter().map(f).collect::<Vec<f64>>();
    let (npl, npu, spl, spu) = (col(|o| o.np_lower), col(|o| o.np_upper), col(|o| o.sp_lower), col(|o| o.sp_upper));
    Ok(StudyRow {
        scenario: cell.scenario.clone(),
        p: cell.p,
        phi: cell.phi,
        true_lower: truth.cd4_lower,
        true_upper: truth.cd4_upper,
        true_tmr: truth.report.tmr,
        np_lower_mean: mean(&npl),
        np_lower_sd: sample_sd(&npl),
        np_upper_mean: mean(&npu),
        np_upper_sd: sample_sd(&npu),
        np_tmr_mean: mean(&col(|o| o.np_tmr)),
        sp_lower_mean: mean(&spl),
        sp_lower_sd: sample_sd(&spl),
        sp_upper_mean: mean(&spu),
        sp_upper_sd: sample_sd(&spu),
        sp_tmr_mean: mean(&col(|o| o.sp_tmr)),
        sp1_lower_mean: mean(&col(|o| o.sp1_lower)),
        sp1_upper_mean: mean(&col(|o| o.sp1_upper)),
        sp1_tmr_mean: mean(&col(|o| o.sp1_tmr)),
        clamped: ok.iter().filter(|o| o.sp_clamped).count(),
        replicates_used: ok.len(),
        failures: replicates - ok.len(),
    })
}

/// Every combination of scenario, prevalence and budget.
pub fn run_scenario_study(scenarios: &[&str], p_values: &[f64], phi_values: &[f64], replicates: usize, n: usize, seed: u64) -> Result<Vec<StudyRow>> {
    let mut rows = Vec::new();
    let mut idx = 0u64;
    for &s in scenarios {
        for &p in p_values {
            for &phi in phi_values {
                let cell = StudyCell { scenario: s.to_string(), p, phi };
                rows.push(run_cell(&cell, idx, replicates, n, seed)?);
                idx += 1;
            }
        }
    }
    Ok(rows)
}

const STUDY_HEADER: [&str; 22] = [
    "scenario", "p", "phi", "true_lower", "true_upper", "true_tmr", "np_lower_mean", "np_lower_sd", "np_upper_mean", "np_upper_sd",
    "np_tmr_mean", "sp_lower_mean", "sp_lower_sd", "sp_upper_mean", "sp_upper_sd", "sp_tmr_mean", "sp1_lower_mean", "sp1_upper_mean",
    "sp1_tmr_mean", "clamped", "replicates_used", "failures",
];

pub fn write_study_csv<W: Write>(rows: &[StudyRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(STUDY_HEADER)?;
    for r in rows {
        let mut rec = vec![r.scenario.clone()];
        rec.extend(
            [
                r.p, r.phi, r.true_lower, r.true_upper, r.true_tmr, r.np_lower_mean, r.np_lower_sd, r.np_upper_mean, r.np_upper_sd,
                r.np_tmr_mean, r.sp_lower_mean, r.sp_lower_sd, r.sp_upper_mean, r.sp_upper_sd, r.sp_tmr_mean, r.sp1_lower_mean,
                r.sp1_upper_mean, r.sp1_tmr_mean,
            ]
            .iter()
            .map(|&v| fmt_f64(v)),
        );
        rec.extend([r.clamped.to_string(), r.replicates_used.to_string(), r.failures.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Gamma densities of both statuses at one CD4 value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub cd4: f64,
    pub f0: f64,
    pub f1: f64,
}

fn gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return if x == 0.0 && shape == 1.0 { 1.0 / scale } else { 0.0 };
    }
    ((shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()).exp()
}

/// Latent gamma densities on `0, step, 2 step, ..` up to `max_cd4`.
pub fn density_table(scenario: &GammaScenario, max_cd4: f64, step: f64) -> Result<Vec<DensityRow>> {
    if !(step > 0.0) || !(max_cd4 >= 0.0) || !max_cd4.is_finite() {
        return Err(Error::Config("density grid needs step > 0 and a finite max >= 0".into()));
    }
    let count = (max_cd4 / step).floor() as usize + 1;
    Ok((0..count)
        .map(|k| {
            let x = k as f64 * step;
            DensityRow { cd4: x, f0: gamma_pdf(x, scenario.eta0, scenario.kappa0), f1: gamma_pdf(x, scenario.eta1, scenario.kappa1) }
        })
        .collect())
}

pub fn write_density_csv<W: Write>(rows: &[DensityRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cd4", "f0", "f1"])?;
    for r in rows {
        w.write_record([fmt_f64(r.cd4), fmt_f64(r.f0), fmt_f64(r.f1)])?;
    }
    w.flush()?;
    Ok(())
}

/// Spread of one method's cutoffs across sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConvergence {
    pub method: String,
    /// Mean of the lower and upper SDs at each size.
    pub sigma: Vec<f64>,
    pub sigma_lower: Vec<f64>,
    pub sigma_upper: Vec<f64>,
    /// Exponent `w` in `sigma_n ~ n^-w`.
    pub slope: f64,
    pub intercept: f64,
    pub failures: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceResult {
    pub sample_sizes: Vec<usize>,
    pub methods: Vec<MethodConvergence>,
}

/// Least-squares fit of `log sigma = a + w (-log n)`; returns `(w, a)`.
pub fn power_law_slope(sizes: &[usize], sigma: &[f64]) -> Result<(f64, f64)> {
    if sizes.len() != sigma.len() || sizes.len() < 2 {
        return Err(Error::Config("need at least two (n, sigma) pairs".into()));
    }
    if sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Numerical("sigma must be positive and finite".into()));
    }
    let x: Vec<f64> = sizes.iter().map(|&n| -(n as f64).ln()).collect();
    let y: Vec<f64> = sigma.iter().map(|s| s.ln()).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("sample sizes must differ".into()));
    }
    let w = sxy / sxx;
    Ok((w, my - w * mx))
}

/// Generic harness: `estimator(n, rng)` returns `(lower, upper)` per method.
/// Replicate `r` at size index `i` draws from stream `(i << 32) | r`.
pub fn convergence_harness<F>(method_names: &[&str], sizes: &[usize], replicates: usize, seed: u64, estimator: F) -> Result<ConvergenceResult>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<Vec<(f64, f64)>> + Sync,
{
    if sizes.len() < 3 {
        return Err(Error::Config("at least three sample sizes are required".into()));
    }
    if replicates < 2 {
        return Err(Error::Config("at least two replicates are required".into()));
    }
    let m = method_names.len();
    let mut lower = vec![Vec::new(); m];
    let mut upper = vec![Vec::new(); m];
    let mut fails = vec![Vec::new(); m];
    for (i, &n) in sizes.iter().enumerate() {
        let draws: Vec<Option<Vec<(f64, f64)>>> = (0..replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng_for(seed, ((i as u64) << 32) | r as u64);
                estimator(n, &mut rng).ok().filter(|v| v.len() == m)
            })
            .collect();
        let ok: Vec<&Vec<(f64, f64)>> = draws.iter().flatten().collect();
        for j in 0..m {
            let lo: Vec<f64> = ok.iter().map(|v| v[j].0).collect();
            let up: Vec<f64> = ok.iter().map(|v| v[j].1).collect();
            lower[j].push(sample_sd(&lo));
            upper[j].push(sample_sd(&up));
            fails[j].push(replicates - ok.len());
        }
    }
    let methods = (0..m)
        .map(|j| {
            let sigma: Vec<f64> = lower[j].iter().zip(&upper[j]).map(|(a, b)| 0.5 * (a + b)).collect();
            let (slope, intercept) = power_law_slope(sizes, &sigma)?;
            Ok(MethodConvergence {
                method: method_names[j].to_string(),
                sigma,
                sigma_lower: lower[j].clone(),
                sigma_upper: upper[j].clone(),
                slope,
                intercept,
                failures: fails[j].clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ConvergenceResult { sample_sizes: sizes.to_vec(), methods })
}

/// Nonparametric and semiparametric min-TMR cutoffs (CD4 scale) across sizes.
pub fn convergence_study(scenario: &GammaScenario, phi: f64, sizes: &[usize], replicates: usize, seed: u64) -> Result<ConvergenceResult> {
    check_phi(phi)?;
    convergence_harness(&["nonparametric", "semiparametric"], sizes, replicates, seed, |n, rng| {
        let cohort = sample_with_rng(scenario, n, rng)?;
        let ecdf = ecdf_set(&cohort)?;
        let max_cd4 = -ecdf.support()[0];
        let (np, _) = select_empirical(&ecdf, phi, &SelectionCriterion::MinTmr)?;
        let fit = fit_score(&cohort.scores(), &cohort.statuses())?;
        let sp = select_tilt_min_tmr(&fit, &ecdf, phi)?;
        Ok(vec![cd4_interval(&np, max_cd4), cd4_interval(&sp.rule, max_cd4)])
    })
}

/// Smallest `n` whose fitted `sigma_n` is at most `target`, per method.
/// Never smaller than the smallest size in the study.
pub fn design_lookup(result: &ConvergenceResult, target_sigma: f64) -> Result<Vec<(String, usize)>> {
    if !(target_sigma > 0.0) {
        return Err(Error::Config("target sigma must be positive".into()));
    }
    let n_min = *result.sample_sizes.iter().min().ok_or(Error::EmptyInput)?;
    result
        .methods
        .iter()
        .map(|m| {
            if !(m.slope > 0.0) {
                return Err(Error::Numerical(format!("{}: non-positive slope {}", m.method, m.slope)));
            }
            // sigma(n) = exp(a) n^-w
            let n = ((m.intercept - target_sigma.ln()) / m.slope).exp();
            let n = if n.is_finite() { n.ceil().max(1.0) as usize } else { usize::MAX };
            Ok((m.method.clone(), n.max(n_min)))
        })
        .collect()
}
