//! Exponential tilt estimates of the status-specific score CDFs.
//!
//! Under `g1(s) = exp(b0* + b1 s) g0(s)` the profile likelihood puts mass
//! `theta_i = 1 / (n (1 + nu (e_i - 1)))` on each observation, with
//! `e_i = exp(b0* + b1 S_i)` and `nu` the root of
//! `sum (e_i - 1) / (1 + nu (e_i - 1)) = 0`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cohort::{fmt_f64, Cohort};
use crate::empirical::{ecdf_set, CdfTable, EcdfSet};
use crate::error::{Error, Result};
use crate::logistic::{fit_score, logit, LogisticFit};

/// Target for `|f(nu)|` in [`solve_nu`].
pub const NU_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltModel {
    pub beta0: f64,
    pub beta1: f64,
    pub beta0_star: f64,
    pub nu: f64,
    pub p_hat: f64,
    /// Mass of a single observation at each support point.
    pub theta: Vec<f64>,
    /// Observation counts at each support point.
    pub counts: Vec<usize>,
    /// Tilted `G0`, `G1` and pooled `G` on the empirical support.
    pub table: CdfTable,
}

impl TiltModel {
    pub fn support(&self) -> &[f64] {
        &self.table.support
    }

    /// `sum theta_i` over all observations.
    pub fn total_mass(&self) -> f64 {
        self.theta.iter().zip(&self.counts).map(|(t, &c)| t * c as f64).sum()
    }

    /// `sum theta_i exp(b0* + b1 S_i)` over all observations.
    pub fn tilted_mass(&self) -> f64 {
        self.theta
            .iter()
            .zip(&self.counts)
            .zip(&self.table.support)
            .map(|((t, &c), &s)| t * c as f64 * (self.beta0_star + self.beta1 * s).exp())
            .sum()
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
}

fn nu_equation(nu: f64, e: &[f64], w: &[f64]) -> f64 {
    e.iter().zip(w).map(|(&ei, &wi)| wi * (ei - 1.0) / (1.0 + nu * (ei - 1.0))).sum()
}

/// Weighted form of [`solve_nu`]: `weights[k]` copies of `e[k]`.
fn solve_nu_weighted(e: &[f64], w: &[f64], p_hat: f64) -> Result<f64> {
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite tilt factor".into()));
    }
    let e_max = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e_min = e.iter().cloned().fold(f64::INFINITY, f64::min);
    if e_max == 1.0 && e_min == 1.0 {
        return Ok(p_hat);
    }
    // f decreases on the admissible interval, from +inf at a pole to -inf
    // at the other; an interval missing a pole has no sign change
    if !(e_max > 1.0 && e_min < 1.0) {
        return Err(Error::NoBracket);
    }
    let mut lo = -1.0 / (e_max - 1.0);
    let mut hi = 1.0 / (1.0 - e_min);
    let mut best = (f64::INFINITY, 0.5 * (lo + hi));
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = nu_equation(mid, e, w);
        if f.abs() < best.0 {
            best = (f.abs(), mid);
        }
        if f.abs() <= NU_TOL {
            break;
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.1)
}

/// Root of `sum (e_i - 1) / (1 + nu (e_i - 1))` with `e_i = exp(b0* + b1 S_i)`.
/// Returns `p_hat` when every `e_i` equals one.
pub fn solve_nu(beta0_star: f64, beta1: f64, scores: &[f64], p_hat: f64) -> Result<f64> {
    if !beta0_star.is_finite() || !beta1.is_finite() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite input to solve_nu".into()));
    }
    let e: Vec<f64> = scores.iter().map(|&s| (beta0_star + beta1 * s).exp()).collect();
    solve_nu_weighted(&e, &vec![1.0; e.len()], p_hat)
}

/// Tilt model from a logistic fit of status on score over the same data.
pub fn tilt_from_fit(fit: &LogisticFit, ecdf: &EcdfSet) -> Result<TiltModel> {
    let beta1 = fit.slope();
    let beta0 = fit.intercept;
    let p_hat = ecdf.p_hat();
    let beta0_star = beta0 - logit(p_hat);
    let support = ecdf.support().to_vec();
    let (c0, c1) = ecdf.counts();
    let counts: Vec<usize> = c0.iter().zip(c1).map(|(a, b)| a + b).collect();
    let n = ecdf.n() as f64;

    let e: Vec<f64> = support.iter().map(|&s| (beta0_star + beta1 * s).exp()).collect();
    let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let nu = solve_nu_weighted(&e, &w, p_hat)?;

    let mut theta = Vec::with_capacity(e.len());
    for &ei in &e {
        let t = 1.0 / (n * (1.0 + nu * (ei - 1.0)));
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Numerical(format!("tilt mass {t} is not positive")));
        }
        theta.push(t);
    }

    let (mut a0, mut a1) = (0.0, 0.0);
    let mut g0 = Vec::with_capacity(e.len());
    let mut g1 = Vec::with_capacity(e.len());
    let mut g = Vec::with_capacity(e.len());
    for k in 0..e.len() {
        a0 += w[k] * theta[k];
        a1 += w[k] * theta[k] * e[k];
        g0.push(a0);
        g1.push(a1);
        g.push((1.0 - p_hat) * a0 + p_hat * a1);
    }
    Ok(TiltModel {
        beta0,
        beta1,
        beta0_star,
        nu,
        p_hat,
        theta,
        counts,
        table: CdfTable { support, g0, g1, g, p: p_hat },
    })
}

/// Fits the logistic model of status on score and builds the tilt estimates.
pub fn fit_tilt(cohort: &Cohort) -> Result<TiltModel> {
    let ecdf = ecdf_set(cohort)?;
    let fit = fit_score(&cohort.scores(), &cohort.statuses())?;
    if !fit.converged {
        return Err(Error::NotConverged { iterations: fit.iterations, gradient: fit.gradient_norm });
    }
    tilt_from_fit(&fit, &ecdf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofRow {
    pub s: f64,
    pub g0_emp: f64,
    pub g0_tilt: f64,
    pub g1_emp: f64,
    pub g1_tilt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofOverlay {
    pub rows: Vec<GofRow>,
    pub sup_g0: f64,
    pub sup_g1: f64,
}

impl GofOverlay {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "g0_emp", "g0_tilt", "g1_emp", "g1_tilt"])?;
        for r in &self.rows {
            w.write_record([fmt_f64(r.s), fmt_f64(r.g0_emp), fmt_f64(r.g0_tilt), fmt_f64(r.g1_emp), fmt_f64(r.g1_tilt)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical and tilted CDFs side by side on `grid`.
pub fn gof_overlay(tilt: &TiltModel, ecdf: &EcdfSet, grid: &[f64]) -> GofOverlay {
    let rows: Vec<GofRow> = grid
        .iter()
        .map(|&s| GofRow { s, g0_emp: ecdf.g0(s), g0_tilt: tilt.g0(s), g1_emp: ecdf.g1(s), g1_tilt: tilt.g1(s) })
        .collect();
    let sup_g0 = rows.iter().map(|r| (r.g0_emp - r.g0_tilt).abs()).fold(0.0, f64::max);
    let sup_g1 = rows.iter().map(|r| (r.g1_emp - r.g1_tilt).abs()).fold(0.0, f64::max);
    GofOverlay { rows, sup_g0, sup_g1 }
}
