//! Maximum-likelihood binary logistic regression and the Hosmer–Lemeshow check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::chi_square_sf;

/// Newton stops once the mean log-likelihood gradient is this small.
pub const GRADIENT_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;
/// Coefficient norm beyond which the data are declared separated.
pub const SEPARATION_NORM: f64 = 1e4;

/// Fitted model `logit Pr(Z = 1 | x) = intercept + Σ coefficients[k] x[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub feature_names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub intercept_se: f64,
    /// Standard errors from the observed information, aligned with `coefficients`.
    pub standard_errors: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Max |mean gradient| at the returned estimate, on centered and scaled features.
    pub gradient_norm: f64,
}

impl LogisticFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.feature_names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        inv_logit(self.linear_predictor(x))
    }

    /// Slope of a one-feature fit.
    pub fn slope(&self) -> f64 {
        self.coefficients[0]
    }
}

pub fn inv_logit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + e^eta)` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Log-likelihood at `beta = (intercept, coefficients...)`.
pub fn log_likelihood(beta: &[f64], rows: &[Vec<f64>], labels: &[bool]) -> f64 {
    rows.iter()
        .zip(labels)
        .map(|(x, &y)| {
            let eta = beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
            (if y { eta } else { 0.0 }) - softplus(eta)
        })
        .sum()
}

/// Gradient of [`log_likelihood`] with respect to `beta`.
pub fn gradient(beta: &[f64], rows: &[Vec<f64>], labels: &[bool]) -> Vec<f64> {
    let mut g = vec![0.0; beta.len()];
    for (x, &y) in rows.iter().zip(labels) {
        let eta = beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
        let r = f64::from(u8::from(y)) - inv_logit(eta);
        g[0] += r;
        for (gk, v) in g[1..].iter_mut().zip(x) {
            *gk += r * v;
        }
    }
    g
}

fn information(beta: &[f64], rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = beta.len();
    let mut h = DMatrix::<f64>::zeros(d, d);
    let mut z = vec![1.0; d];
    for x in rows {
        z[1..].copy_from_slice(x);
        let eta: f64 = beta.iter().zip(&z).map(|(b, v)| b * v).sum();
        let p = inv_logit(eta);
        let w = p * (1.0 - p);
        for i in 0..d {
            for j in 0..=i {
                h[(i, j)] += w * z[i] * z[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            h[(j, i)] = h[(i, j)];
        }
    }
    h
}

fn perfectly_classified(beta: &[f64], rows: &[Vec<f64>], labels: &[bool], margin: f64) -> bool {
    rows.iter().zip(labels).all(|(x, &y)| {
        let eta = beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
        if y {
            eta > margin
        } else {
            eta < -margin
        }
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Fit by Newton–Raphson with step halving.
///
/// Returns a fit with `converged = false` when the iteration budget runs out;
/// callers that need an MLE must check the flag.
pub fn fit_logistic(names: &[String], rows: &[Vec<f64>], labels: &[bool]) -> Result<LogisticFit> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if labels.len() != n {
        return Err(Error::Config("labels and features differ in length".into()));
    }
    let d = names.len() + 1;
    if rows.iter().any(|r| r.len() != d - 1 || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Config("features must be finite with one value per name".into()));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == n {
        return Err(Error::DegenerateLabels);
    }

    // Newton runs on centered, scaled features; coefficients are mapped back
    let mut center = vec![0.0; d - 1];
    let mut scale = vec![0.0; d - 1];
    for k in 0..d - 1 {
        let m = rows.iter().map(|r| r[k]).sum::<f64>() / n as f64;
        let v = rows.iter().map(|r| (r[k] - m) * (r[k] - m)).sum::<f64>() / n as f64;
        if !(v > 0.0) {
            return Err(Error::Singular);
        }
        center[k] = m;
        scale[k] = v.sqrt();
    }
    let zrows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&center).zip(&scale).map(|((x, m), s)| (x - m) / s).collect())
        .collect();

    let nf = n as f64;
    let mut beta = vec![0.0; d];
    beta[0] = logit(positives as f64 / nf);
    let mut ll = log_likelihood(&beta, &zrows, labels);
    let mut grad: Vec<f64> = gradient(&beta, &zrows, labels);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        if max_abs(&grad) / nf <= GRADIENT_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let h = information(&beta, &zrows);
        let Some(chol) = h.cholesky() else {
            if perfectly_classified(&beta, &zrows, labels, 0.0) {
                let norm = beta[1..].iter().map(|b| b * b).sum::<f64>().sqrt();
                return Err(Error::Separation { norm });
            }
            return Err(Error::Singular);
        };
        let step = chol.solve(&DVector::from_column_slice(&grad));

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let cand_ll = log_likelihood(&cand, &zrows, labels);
            // near the optimum the likelihood gain drops below its rounding
            // error, so a step that shrinks the gradient is also taken
            let flat = cand_ll.is_finite()
                && cand_ll >= ll - 1e-13 * (1.0 + ll.abs())
                && max_abs(&gradient(&cand, &zrows, labels)) < max_abs(&grad);
            if cand_ll.is_finite() && cand_ll >= ll || flat {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        grad = gradient(&beta, &zrows, labels);
        let norm = beta[1..].iter().map(|b| b * b).sum::<f64>().sqrt();
        if norm > SEPARATION_NORM {
            return Err(Error::Separation { norm });
        }
        if !accepted {
            break;
        }
    }
    if !converged && max_abs(&grad) / nf <= GRADIENT_TOL {
        converged = true;
    }
    if converged {
        // one more Newton step drives the score equations to round-off
        if let Some(chol) = information(&beta, &zrows).cholesky() {
            let step = chol.solve(&DVector::from_column_slice(&grad));
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
            let cand_ll = log_likelihood(&cand, &zrows, labels);
            let cand_grad = gradient(&cand, &zrows, labels);
            if cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) && max_abs(&cand_grad) <= max_abs(&grad) {
                beta = cand;
                ll = cand_ll;
                grad = cand_grad;
            }
        }
    }

    // Complete separation: every fitted probability sits on its label.
    if perfectly_classified(&beta, &zrows, labels, 15.0) {
        let norm = beta[1..].iter().map(|b| b * b).sum::<f64>().sqrt();
        return Err(Error::Separation { norm });
    }

    let mut beta_std = beta;
    let mut beta = vec![0.0; d];
    for k in 1..d {
        beta[k] = beta_std[k] / scale[k - 1];
        beta_std[0] -= beta[k] * center[k - 1];
    }
    beta[0] = beta_std[0];

    let cov = information(&beta, rows).try_inverse().ok_or(Error::Singular)?;
    let se: Vec<f64> = (0..d).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    if converged && se.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Singular);
    }

    Ok(LogisticFit {
        feature_names: names.to_vec(),
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        intercept_se: se[0],
        standard_errors: se[1..].to_vec(),
        converged,
        iterations,
        log_likelihood: ll,
        gradient_norm: max_abs(&grad) / nf,
    })
}

/// Logistic regression of status on a single score.
pub fn fit_score(scores: &[f64], labels: &[bool]) -> Result<LogisticFit> {
    let rows: Vec<Vec<f64>> = scores.iter().map(|&s| vec![s]).collect();
    fit_logistic(&["score".to_string()], &rows, labels)
}

/// One deciles-of-risk group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlGroup {
    pub size: usize,
    pub observed: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HosmerLemeshow {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub groups: Vec<HlGroup>,
}

/// Hosmer–Lemeshow goodness-of-fit test with equal-count risk groups.
///
/// Observations with tied predicted probabilities always share a group.
pub fn hosmer_lemeshow(
    fit: &LogisticFit,
    rows: &[Vec<f64>],
    labels: &[bool],
    groups: usize,
) -> Result<HosmerLemeshow> {
    let n = rows.len();
    if groups < 2 {
        return Err(Error::Config("Hosmer–Lemeshow needs at least 2 groups".into()));
    }
    if groups > n {
        return Err(Error::Config(format!("{groups} groups for {n} observations")));
    }
    if !fit.converged {
        return Err(Error::NotConverged { iterations: fit.iterations, gradient: fit.gradient_norm });
    }
    let mut pred: Vec<(f64, bool)> = rows.iter().zip(labels).map(|(x, &y)| (fit.predict(x), y)).collect();
    pred.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut bounds = Vec::with_capacity(groups);
    let mut start = 0;
    for k in 1..=groups {
        let mut end = (k * n + groups / 2) / groups;
        end = end.max(start).min(n);
        while end > 0 && end < n && pred[end].0 == pred[end - 1].0 {
            end += 1;
        }
        if k == groups {
            end = n;
        }
        if end <= start {
            return Err(Error::Numerical(format!("empty Hosmer–Lemeshow group {k} after tying")));
        }
        bounds.push((start, end));
        start = end;
    }

    let mut statistic = 0.0;
    let mut out = Vec::with_capacity(groups);
    for &(a, b) in &bounds {
        let size = b - a;
        let observed = pred[a..b].iter().filter(|p| p.1).count() as f64;
        let expected: f64 = pred[a..b].iter().map(|p| p.0).sum();
        let mean = expected / size as f64;
        let denom = size as f64 * mean * (1.0 - mean);
        let diff = observed - expected;
        if denom > 0.0 {
            statistic += diff * diff / denom;
        } else if diff.abs() > 1e-12 {
            statistic = f64::INFINITY;
        }
        out.push(HlGroup { size, observed, expected });
    }
    let df = groups - 2;
    let p_value = if df == 0 {
        if statistic == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        chi_square_sf(statistic, df as f64)?
    };
    Ok(HosmerLemeshow { statistic, df, p_value, groups: out })
}
