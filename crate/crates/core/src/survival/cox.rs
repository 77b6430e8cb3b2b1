//! Cox partial likelihood with Efron ties, for fixed and counting-process data.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{CountingProcessRow, SurvivalRecord};
use crate::coefficient::Coefficient;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const MAX_ITER: usize = 100;
const SCORE_TOL: f64 = 1e-10;
/// A one-standard-deviation shift multiplying the hazard by more than e^25 signals divergence.
const DIVERGENCE: f64 = 25.0;
/// Standardized information this small relative to the likelihood scale means divergence.
const COLLAPSE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    /// Log hazard ratios with their (non-exponentiated) standard errors.
    pub coefficients: Vec<Coefficient>,
    /// Constant covariates left out of the fit.
    pub dropped: Vec<String>,
    pub loglik: f64,
    pub null_loglik: f64,
    pub aic: f64,
    pub n_subjects: usize,
    pub n_events: usize,
    pub iterations: usize,
    /// Max-norm of the score at the reported estimate.
    pub score_norm: f64,
    pub se_flagged: bool,
}

impl CoxFit {
    /// Log hazard ratio; zero for a dropped covariate.
    pub fn beta(&self, name: &str) -> Option<f64> {
        self.coefficients
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.estimate)
            .or_else(|| self.dropped.iter().any(|d| d == name).then_some(0.0))
    }

    pub fn hazard_ratio(&self, name: &str) -> Option<f64> {
        self.beta(name).map(f64::exp)
    }
}

/// Percent change in hazard for a `delta` change in `covariate`.
pub fn hazard_effect(fit: &CoxFit, covariate: &str, delta: f64) -> Result<f64> {
    let beta = fit
        .beta(covariate)
        .ok_or_else(|| Error::data(format!("unknown covariate {covariate}")))?;
    Ok(100.0 * ((beta * delta).exp() - 1.0))
}

/// Partial log-likelihood, score and information at one coefficient vector.
struct Terms {
    loglik: f64,
    score: Vec<f64>,
    info: Matrix<f64>,
}

struct Accum {
    s0: f64,
    s1: Vec<f64>,
    s2: Matrix<f64>,
}

impl Accum {
    fn new(p: usize) -> Self {
        Self {
            s0: 0.0,
            s1: vec![0.0; p],
            s2: Matrix::zeros(p, p),
        }
    }

    fn add(&mut self, w: f64, x: &[f64], sign: f64) {
        self.s0 += sign * w;
        for i in 0..x.len() {
            self.s1[i] += sign * w * x[i];
            for j in 0..=i {
                self.s2[(i, j)] += sign * w * x[i] * x[j];
            }
        }
    }
}

/// Efron contribution of `d` tied events given the risk-set sums and the tied events' own sums.
fn efron(terms: &mut Terms, risk: &Accum, tied: &Accum, d: usize, eta_sum: f64, x_sum: &[f64]) {
    let p = x_sum.len();
    terms.loglik += eta_sum;
    for i in 0..p {
        terms.score[i] += x_sum[i];
    }
    for l in 0..d {
        let frac = l as f64 / d as f64;
        let s0 = risk.s0 - frac * tied.s0;
        terms.loglik -= s0.ln();
        let mean: Vec<f64> = (0..p).map(|i| (risk.s1[i] - frac * tied.s1[i]) / s0).collect();
        for i in 0..p {
            terms.score[i] -= mean[i];
            for j in 0..=i {
                let s2 = (risk.s2[(i, j)] - frac * tied.s2[(i, j)]) / s0;
                terms.info[(i, j)] += s2 - mean[i] * mean[j];
            }
        }
    }
}

fn finish(mut terms: Terms) -> Terms {
    let p = terms.score.len();
    for i in 0..p {
        for j in 0..i {
            terms.info[(j, i)] = terms.info[(i, j)];
        }
    }
    terms
}

fn linear(x: &[f64], beta: &[f64]) -> f64 {
    x.iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// Right-censored data, risk sets accumulated from the longest duration down.
struct FixedData {
    time: Vec<f64>,
    event: Vec<bool>,
    x: Vec<Vec<f64>>,
    order: Vec<usize>,
}

impl FixedData {
    fn terms(&self, beta: &[f64]) -> Terms {
        let p = beta.len();
        let mut terms = Terms {
            loglik: 0.0,
            score: vec![0.0; p],
            info: Matrix::zeros(p, p),
        };
        let mut risk = Accum::new(p);
        let mut i = 0;
        while i < self.order.len() {
            let t = self.time[self.order[i]];
            let mut j = i;
            let mut tied = Accum::new(p);
            let mut d = 0;
            let mut eta_sum = 0.0;
            let mut x_sum = vec![0.0; p];
            while j < self.order.len() && self.time[self.order[j]] == t {
                let k = self.order[j];
                let eta = linear(&self.x[k], beta);
                let w = eta.exp();
                risk.add(w, &self.x[k], 1.0);
                if self.event[k] {
                    tied.add(w, &self.x[k], 1.0);
                    d += 1;
                    eta_sum += eta;
                    for (s, v) in x_sum.iter_mut().zip(&self.x[k]) {
                        *s += v;
                    }
                }
                j += 1;
            }
            if d > 0 {
                efron(&mut terms, &risk, &tied, d, eta_sum, &x_sum);
            }
            i = j;
        }
        finish(terms)
    }
}

/// `(start, stop]` rows; rows enter by stop and leave by start, both descending.
struct CountingData {
    start: Vec<f64>,
    stop: Vec<f64>,
    event: Vec<bool>,
    x: Vec<Vec<f64>>,
    by_stop: Vec<usize>,
    by_start: Vec<usize>,
    event_times: Vec<f64>,
}

impl CountingData {
    fn terms(&self, beta: &[f64]) -> Terms {
        let p = beta.len();
        let mut terms = Terms {
            loglik: 0.0,
            score: vec![0.0; p],
            info: Matrix::zeros(p, p),
        };
        let w: Vec<f64> = self.x.iter().map(|x| linear(x, beta).exp()).collect();
        let mut risk = Accum::new(p);
        let (mut a, mut r) = (0, 0);
        for &t in &self.event_times {
            while a < self.by_stop.len() && self.stop[self.by_stop[a]] >= t {
                let k = self.by_stop[a];
                risk.add(w[k], &self.x[k], 1.0);
                a += 1;
            }
            while r < self.by_start.len() && self.start[self.by_start[r]] >= t {
                let k = self.by_start[r];
                risk.add(w[k], &self.x[k], -1.0);
                r += 1;
            }
            let mut tied = Accum::new(p);
            let mut d = 0;
            let mut eta_sum = 0.0;
            let mut x_sum = vec![0.0; p];
            // events at t sit among the rows whose stop is exactly t
            for &k in self.by_stop[..a].iter().rev() {
                if self.stop[k] > t {
                    break;
                }
                if self.event[k] && self.stop[k] == t {
                    tied.add(w[k], &self.x[k], 1.0);
                    d += 1;
                    eta_sum += linear(&self.x[k], beta);
                    for (s, v) in x_sum.iter_mut().zip(&self.x[k]) {
                        *s += v;
                    }
                }
            }
            if d > 0 {
                efron(&mut terms, &risk, &tied, d, eta_sum, &x_sum);
            }
        }
        finish(terms)
    }
}

/// Drops constant columns and centers the rest.
fn prepare(names: &[String], x: &[Vec<f64>]) -> Result<(Vec<usize>, Vec<String>, Vec<Vec<f64>>, Vec<f64>)> {
    if x.iter().any(|r| r.len() != names.len()) {
        return Err(Error::data("covariate rows do not match the covariate names"));
    }
    let n = x.len() as f64;
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let first = x.first().map_or(0.0, |r| r[j]);
        if x.iter().all(|r| r[j] == first) {
            warn!("covariate {name} is constant and is dropped");
            dropped.push(name.clone());
        } else {
            keep.push(j);
        }
    }
    let means: Vec<f64> = keep.iter().map(|&j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let sds: Vec<f64> = keep
        .iter()
        .zip(&means)
        .map(|(&j, m)| (x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    let centered = x
        .iter()
        .map(|r| keep.iter().zip(&means).map(|(&j, m)| r[j] - m).collect())
        .collect();
    Ok((keep, dropped, centered, sds))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn newton<E: Fn(&[f64]) -> Terms>(eval: E, names: &[String], sds: &[f64]) -> Result<(Vec<f64>, Terms, f64, usize)> {
    let p = sds.len();
    let mut beta = vec![0.0; p];
    let mut cur = eval(&beta);
    let null = cur.loglik;
    let mut iterations = 0;
    while max_abs(&cur.score) > SCORE_TOL && iterations < MAX_ITER {
        iterations += 1;
        let step = match cur.info.solve_spd(&cur.score) {
            Some(s) => s,
            None => return Err(divergence(names, &beta, sds, iterations, cur.loglik)),
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let next = eval(&trial);
            if next.loglik.is_finite() && next.loglik >= cur.loglik - 1e-12 * (1.0 + cur.loglik.abs()) {
                accepted = Some((trial, next));
                break;
            }
            scale *= 0.5;
        }
        let Some((b, next)) = accepted else { break };
        let stalled = (next.loglik - cur.loglik).abs() <= 1e-15 * (1.0 + cur.loglik.abs());
        beta = b;
        cur = next;
        if beta.iter().zip(sds).any(|(b, s)| (b * s).abs() > DIVERGENCE) {
            return Err(divergence(names, &beta, sds, iterations, cur.loglik));
        }
        if stalled && max_abs(&cur.score) < 1e-6 {
            break;
        }
    }
    // a coefficient running off to infinity leaves a vanishing score and information
    for (j, s) in sds.iter().enumerate() {
        if cur.info[(j, j)] * s * s < COLLAPSE * (1.0 + null.abs()) {
            return Err(Error::MonotoneLikelihood {
                covariate: names[j].clone(),
            });
        }
    }
    if max_abs(&cur.score) >= 1e-6 {
        return Err(Error::NonConvergence {
            iterations,
            loglik: cur.loglik,
            best: beta,
        });
    }
    Ok((beta, cur, null, iterations))
}

fn divergence(names: &[String], beta: &[f64], sds: &[f64], iterations: usize, loglik: f64) -> Error {
    match beta
        .iter()
        .zip(sds)
        .enumerate()
        .max_by(|a, b| (a.1 .0 * a.1 .1).abs().total_cmp(&(b.1 .0 * b.1 .1).abs()))
    {
        Some((j, (b, s))) if (b * s).abs() > 1.0 => Error::MonotoneLikelihood {
            covariate: names[j].clone(),
        },
        _ => Error::NonConvergence {
            iterations,
            loglik,
            best: beta.to_vec(),
        },
    }
}

fn assemble(
    names: &[String],
    keep: &[usize],
    dropped: Vec<String>,
    fitted: (Vec<f64>, Terms, f64, usize),
    n_subjects: usize,
    n_events: usize,
) -> CoxFit {
    let (beta, terms, null, iterations) = fitted;
    let cov = terms.info.inverse_spd();
    let se_flagged = cov.is_none() && !beta.is_empty();
    if se_flagged {
        warn!("Cox information matrix is singular; standard errors flagged");
    }
    let coefficients = keep
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let se = cov.as_ref().map_or(f64::NAN, |c| c[(i, i)].max(0.0).sqrt());
            Coefficient::new(names[j].clone(), beta[i], se)
        })
        .collect();
    debug!("cox converged in {iterations} iterations, loglik {}", terms.loglik);
    CoxFit {
        coefficients,
        dropped,
        loglik: terms.loglik,
        null_loglik: null,
        aic: 2.0 * beta.len() as f64 - 2.0 * terms.loglik,
        n_subjects,
        n_events,
        iterations,
        score_norm: max_abs(&terms.score),
        se_flagged,
    }
}

fn check_events(n_events: usize) -> Result<()> {
    if n_events < 2 {
        return Err(Error::data(format!("Cox model needs at least 2 events, got {n_events}")));
    }
    Ok(())
}

/// Newton-Raphson fit from zero on time-fixed covariates.
pub fn fit_cox(names: &[String], records: &[SurvivalRecord]) -> Result<CoxFit> {
    if records.iter().any(|r| !(r.duration >= 0.0)) {
        return Err(Error::data("durations must be nonnegative"));
    }
    let n_events = records.iter().filter(|r| r.event).count();
    check_events(n_events)?;
    let raw: Vec<Vec<f64>> = records.iter().map(|r| r.covariates.clone()).collect();
    let (keep, dropped, x, sds) = prepare(names, &raw)?;
    let time: Vec<f64> = records.iter().map(|r| r.duration).collect();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| time[b].total_cmp(&time[a]).then(a.cmp(&b)));
    let data = FixedData {
        time,
        event: records.iter().map(|r| r.event).collect(),
        x,
        order,
    };
    let kept: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();
    let fitted = newton(|b| data.terms(b), &kept, &sds)?;
    Ok(assemble(names, &keep, dropped, fitted, records.len(), n_events))
}

/// Newton-Raphson fit on `(start, stop]` rows with time-varying covariates.
pub fn fit_cox_counting(names: &[String], rows: &[CountingProcessRow]) -> Result<CoxFit> {
    if rows.iter().any(|r| !(r.stop > r.start)) {
        return Err(Error::data("counting-process rows need stop > start"));
    }
    let n_events = rows.iter().filter(|r| r.event).count();
    check_events(n_events)?;
    let raw: Vec<Vec<f64>> = rows.iter().map(|r| r.covariates.clone()).collect();
    let (keep, dropped, x, sds) = prepare(names, &raw)?;
    let start: Vec<f64> = rows.iter().map(|r| r.start).collect();
    let stop: Vec<f64> = rows.iter().map(|r| r.stop).collect();
    let mut by_stop: Vec<usize> = (0..rows.len()).collect();
    by_stop.sort_by(|&a, &b| stop[b].total_cmp(&stop[a]).then(a.cmp(&b)));
    let mut by_start: Vec<usize> = (0..rows.len()).collect();
    by_start.sort_by(|&a, &b| start[b].total_cmp(&start[a]).then(a.cmp(&b)));
    let mut event_times: Vec<f64> = rows.iter().filter(|r| r.event).map(|r| r.stop).collect();
    event_times.sort_by(|a, b| b.total_cmp(a));
    event_times.dedup();
    let data = CountingData {
        start,
        stop,
        event: rows.iter().map(|r| r.event).collect(),
        x,
        by_stop,
        by_start,
        event_times,
    };
    let mut subjects: Vec<&str> = rows.iter().map(|r| r.tag.as_str()).collect();
    subjects.sort_unstable();
    subjects.dedup();
    let kept: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();
    let fitted = newton(|b| data.terms(b), &kept, &sds)?;
    Ok(assemble(names, &keep, dropped, fitted, subjects.len(), n_events))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(d: f64, e: bool, x: f64) -> SurvivalRecord {
        SurvivalRecord {
            tag: format!("s{d}{x}"),
            duration: d,
            event: e,
            covariates: vec![x],
        }
    }

    fn names() -> Vec<String> {
        vec!["x".to_string()]
    }

    #[test]
    fn closed_form_three_subjects() {
        // score 1 - 2u/(2u+1) - u/(1+u) = 0 gives u^2 = 1/2
        let r = vec![rec(1.0, true, 1.0), rec(2.0, true, 0.0), rec(3.0, true, 1.0)];
        let f = fit_cox(&names(), &r).unwrap();
        assert!((f.beta("x").unwrap() + 0.5 * 2f64.ln()).abs() < 1e-10);
        assert!(f.score_norm < 1e-9);
        let c = fit_cox_counting(&names(), &super::super::rows_from_records(&r)).unwrap();
        assert!((c.beta("x").unwrap() - f.beta("x").unwrap()).abs() < 1e-12);
    }

    #[test]
    fn efron_tie_loglik() {
        // two tied events with x = 1 and 0, risk set of three (third x = 0) at beta = 0:
        // Efron gives -ln 3 - ln(3 - 1) for the pair
        let r = vec![rec(1.0, true, 1.0), rec(1.0, true, 0.0), rec(2.0, false, 0.0)];
        let f = fit_cox(&names(), &r).unwrap();
        assert!((f.null_loglik - (-(3.0f64).ln() - 2.0f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn zero_covariate_is_null_model() {
        let r = vec![rec(1.0, true, 0.0), rec(2.0, true, 0.0), rec(3.0, true, 0.0)];
        let f = fit_cox(&names(), &r).unwrap();
        assert_eq!(f.beta("x"), Some(0.0));
        assert_eq!(f.loglik, f.null_loglik);
        assert_eq!(f.dropped, names());
    }

    #[test]
    fn separation_is_flagged() {
        let r: Vec<_> = (0..10).map(|i| rec(i as f64 + 1.0, true, if i < 5 { 1.0 } else { 0.0 })).collect();
        match fit_cox(&names(), &r) {
            Err(Error::MonotoneLikelihood { covariate }) => assert_eq!(covariate, "x"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn effect_of_halving() {
        let mut f = fit_cox(
            &names(),
            &[rec(1.0, true, 1.0), rec(2.0, true, 0.0), rec(3.0, true, 2.0), rec(4.0, false, 1.0)],
        )
        .unwrap();
        f.coefficients[0].estimate = 2f64.ln();
        assert!((hazard_effect(&f, "x", 1.0).unwrap() - 100.0).abs() < 1e-9);
        assert!(hazard_effect(&f, "nope", 1.0).is_err());
    }
}
