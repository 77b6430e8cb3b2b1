//! Exact Gaussian likelihood of a regression with ARMA(2,1) errors.
//!
//! The error process is held in the two-dimensional state
//! `[e_t, phi2 e_{t-1} + psi v_t]` and run through a Kalman filter that restarts
//! from the stationary covariance at every segment. Gains do not depend on the
//! data, so one pass over a segment whitens the response and all predictor
//! columns at once; beta and the innovation variance are then concentrated out
//! by least squares on the whitened values.

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RegressionDesign;
use crate::coefficient::Coefficient;
use crate::error::{Error, Result};
use crate::linalg::{solve_general, Matrix};
use crate::optim::{bfgs, BfgsOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmaOrder {
    pub ar: usize,
    pub ma: usize,
}

impl ArmaOrder {
    pub const FULL: ArmaOrder = ArmaOrder { ar: 2, ma: 1 };

    pub fn free(&self) -> usize {
        self.ar + self.ma
    }
}

impl Default for ArmaOrder {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ArmaxOptions {
    pub order: ArmaOrder,
    pub max_iter: usize,
}

impl Default for ArmaxOptions {
    fn default() -> Self {
        Self {
            order: ArmaOrder::FULL,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaxFit {
    pub coefficients: Vec<Coefficient>,
    pub order: ArmaOrder,
    pub phi1: f64,
    pub phi2: f64,
    pub psi: f64,
    /// Standard errors of the free ARMA parameters, in `phi1, phi2, psi` order.
    pub arma_se: Vec<f64>,
    pub sigma2: f64,
    pub loglik: f64,
    /// Log-likelihood at the white-noise start (ordinary least squares).
    pub start_loglik: f64,
    pub aic: f64,
    pub n_obs: usize,
    pub n_segments: usize,
    pub n_params: usize,
    pub iterations: usize,
    /// The observed information was not positive definite.
    pub se_flagged: bool,
    /// Standardized innovations, one vector per segment.
    #[serde(skip)]
    pub residuals: Vec<Vec<f64>>,
}

impl ArmaxFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn beta(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Arma {
    phi1: f64,
    phi2: f64,
    psi: f64,
}

impl Arma {
    const WHITE: Arma = Arma {
        phi1: 0.0,
        phi2: 0.0,
        psi: 0.0,
    };

    /// AR part through partial autocorrelations, MA through tanh.
    fn from_unconstrained(order: ArmaOrder, u: &[f64]) -> Self {
        let (phi1, phi2) = match order.ar {
            0 => (0.0, 0.0),
            1 => (u[0].tanh(), 0.0),
            _ => {
                let (r1, r2) = (u[0].tanh(), u[1].tanh());
                (r1 * (1.0 - r2), r2)
            }
        };
        let psi = if order.ma > 0 { u[order.ar].tanh() } else { 0.0 };
        Self { phi1, phi2, psi }
    }

    fn free(&self, order: ArmaOrder) -> Vec<f64> {
        let mut v = Vec::new();
        if order.ar >= 1 {
            v.push(self.phi1);
        }
        if order.ar >= 2 {
            v.push(self.phi2);
        }
        if order.ma >= 1 {
            v.push(self.psi);
        }
        v
    }

    fn from_free(order: ArmaOrder, v: &[f64]) -> Self {
        let mut it = v.iter().copied();
        let phi1 = if order.ar >= 1 { it.next().unwrap_or(0.0) } else { 0.0 };
        let phi2 = if order.ar >= 2 { it.next().unwrap_or(0.0) } else { 0.0 };
        let psi = if order.ma >= 1 { it.next().unwrap_or(0.0) } else { 0.0 };
        Self { phi1, phi2, psi }
    }

    fn admissible(&self) -> bool {
        self.phi1 + self.phi2 < 1.0 && self.phi2 - self.phi1 < 1.0 && self.phi2.abs() < 1.0 && self.psi.abs() < 1.0
    }

    /// Stationary state covariance per unit innovation variance.
    fn initial_cov(&self) -> Option<[f64; 3]> {
        let (a, b, q) = (self.phi1, self.phi2, self.psi);
        // unknowns p11, p12, p22 of P = T P T' + R R'
        let m = Matrix::from_rows(&[
            vec![1.0 - a * a, -2.0 * a, -1.0],
            vec![-a * b, 1.0 - b, 0.0],
            vec![-b * b, 0.0, 1.0],
        ]);
        let p = solve_general(&m, &[1.0, q, q * q])?;
        (p[0] > 0.0 && p.iter().all(|v| v.is_finite())).then_some([p[0], p[1], p[2]])
    }

    /// `(F_t, K_t)` for the first `len` steps after a restart.
    fn gains(&self, len: usize) -> Option<Vec<[f64; 3]>> {
        if !self.admissible() {
            return None;
        }
        let (a, b, q) = (self.phi1, self.phi2, self.psi);
        let [mut p11, mut p12, mut p22] = self.initial_cov()?;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let f = p11;
            if !(f > 0.0) || !f.is_finite() {
                return None;
            }
            let k0 = (a * p11 + p12) / f;
            let k1 = b * p11 / f;
            out.push([f, k0, k1]);
            let n11 = a * a * p11 + 2.0 * a * p12 + p22 + 1.0 - f * k0 * k0;
            let n12 = a * b * p11 + b * p12 + q - f * k0 * k1;
            let n22 = b * b * p11 + q * q - f * k1 * k1;
            p11 = n11;
            p12 = n12;
            p22 = n22;
        }
        Some(out)
    }
}

/// Whitened response and predictors, row-major, segments concatenated.
struct Whitened {
    y: Vec<f64>,
    x: Vec<f64>,
    log_f: f64,
}

fn whiten(design: &RegressionDesign, arma: Arma) -> Option<Whitened> {
    let max_len = design.segments.iter().map(|s| s.len()).max().unwrap_or(0);
    let gains = arma.gains(max_len)?;
    let p = design.n_cols();
    let parts: Vec<(Vec<f64>, Vec<f64>, f64)> = design
        .segments
        .par_iter()
        .map(|seg| {
            let mut a0 = vec![0.0; p + 1];
            let mut a1 = vec![0.0; p + 1];
            let mut y = Vec::with_capacity(seg.len());
            let mut x = Vec::with_capacity(seg.len() * p);
            let mut log_f = 0.0;
            for (t, [f, k0, k1]) in gains.iter().take(seg.len()).copied().enumerate() {
                let sf = f.sqrt();
                log_f += f.ln();
                for c in 0..=p {
                    let v = if c == 0 { seg.y[t] } else { seg.x[t][c - 1] };
                    let e = v - a0[c];
                    if c == 0 {
                        y.push(e / sf);
                    } else {
                        x.push(e / sf);
                    }
                    let prev = a0[c];
                    a0[c] = arma.phi1 * prev + a1[c] + k0 * e;
                    a1[c] = arma.phi2 * prev + k1 * e;
                }
            }
            (y, x, log_f)
        })
        .collect();
    let mut out = Whitened {
        y: Vec::with_capacity(design.n_obs()),
        x: Vec::with_capacity(design.n_obs() * p),
        log_f: 0.0,
    };
    for (y, x, lf) in parts {
        out.y.extend(y);
        out.x.extend(x);
        out.log_f += lf;
    }
    Some(out)
}

struct Profile {
    beta: Vec<f64>,
    sigma2: f64,
    loglik: f64,
    white: Whitened,
}

fn cross_products(w: &Whitened, p: usize) -> (Matrix<f64>, Vec<f64>) {
    let mut xtx = Matrix::zeros(p, p);
    let mut xty = vec![0.0; p];
    for (row, &y) in w.x.chunks_exact(p).zip(&w.y) {
        for i in 0..p {
            xty[i] += row[i] * y;
            for j in 0..=i {
                xtx[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            xtx[(j, i)] = xtx[(i, j)];
        }
    }
    (xtx, xty)
}

fn residuals(w: &Whitened, beta: &[f64]) -> Vec<f64> {
    let p = beta.len();
    w.x.chunks_exact(p)
        .zip(&w.y)
        .map(|(row, &y)| y - row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

fn gaussian_loglik(n: f64, sigma2: f64, log_f: f64, ssr: f64) -> f64 {
    -0.5 * n * (2.0 * std::f64::consts::PI * sigma2).ln() - 0.5 * log_f - ssr / (2.0 * sigma2)
}

/// Likelihood with beta and sigma^2 at their conditional optimum.
fn profile(design: &RegressionDesign, arma: Arma) -> Option<Profile> {
    let white = whiten(design, arma)?;
    let p = design.n_cols();
    let (xtx, xty) = cross_products(&white, p);
    let beta = xtx.solve_spd(&xty)?;
    let ssr: f64 = residuals(&white, &beta).iter().map(|e| e * e).sum();
    let n = white.y.len() as f64;
    let sigma2 = ssr / n;
    if !(sigma2 > 0.0) {
        return None;
    }
    let loglik = gaussian_loglik(n, sigma2, white.log_f, ssr);
    Some(Profile {
        beta,
        sigma2,
        loglik,
        white,
    })
}

/// Log-likelihood and its beta / sigma^2 gradient at fixed parameters.
fn full_loglik(design: &RegressionDesign, arma: Arma, beta: &[f64], sigma2: f64) -> Option<(f64, Vec<f64>, f64)> {
    let white = whiten(design, arma)?;
    let p = beta.len();
    let e = residuals(&white, beta);
    let ssr: f64 = e.iter().map(|v| v * v).sum();
    let n = e.len() as f64;
    let mut g_beta = vec![0.0; p];
    for (row, &r) in white.x.chunks_exact(p).zip(&e) {
        for i in 0..p {
            g_beta[i] += row[i] * r / sigma2;
        }
    }
    let g_sigma = -n / (2.0 * sigma2) + ssr / (2.0 * sigma2 * sigma2);
    Some((gaussian_loglik(n, sigma2, white.log_f, ssr), g_beta, g_sigma))
}

const HESS_STEP: f64 = 1e-3;

/// Observed information over (beta, free ARMA parameters, sigma^2).
fn observed_information(design: &RegressionDesign, order: ArmaOrder, arma: Arma, prof: &Profile) -> Option<Matrix<f64>> {
    let p = design.n_cols();
    let q = order.free();
    let m = p + q + 1;
    let s2 = prof.sigma2;
    let n = prof.white.y.len() as f64;
    let (xtx, _) = cross_products(&prof.white, p);
    let e = residuals(&prof.white, &prof.beta);
    let ssr: f64 = e.iter().map(|v| v * v).sum();
    let mut h = Matrix::zeros(m, m);
    for i in 0..p {
        for j in 0..p {
            h[(i, j)] = -xtx[(i, j)] / s2;
        }
        let xe: f64 = prof.white.x.chunks_exact(p).zip(&e).map(|(row, r)| row[i] * r).sum();
        h[(i, m - 1)] = -xe / (s2 * s2);
        h[(m - 1, i)] = h[(i, m - 1)];
    }
    h[(m - 1, m - 1)] = n / (2.0 * s2 * s2) - ssr / (s2 * s2 * s2);

    let base = arma.free(order);
    let at = |v: &[f64]| full_loglik(design, Arma::from_free(order, v), &prof.beta, s2);
    let l0 = at(&base)?.0;
    let hs = HESS_STEP;
    for a in 0..q {
        let mut up = base.clone();
        up[a] += hs;
        let mut dn = base.clone();
        dn[a] -= hs;
        let (lu, gu, su) = at(&up)?;
        let (ld, gd, sd) = at(&dn)?;
        for i in 0..p {
            let v = (gu[i] - gd[i]) / (2.0 * hs);
            h[(i, p + a)] = v;
            h[(p + a, i)] = v;
        }
        let v = (su - sd) / (2.0 * hs);
        h[(p + a, m - 1)] = v;
        h[(m - 1, p + a)] = v;
        h[(p + a, p + a)] = (lu - 2.0 * l0 + ld) / (hs * hs);
        for b in 0..a {
            let corner = |sa: f64, sb: f64| {
                let mut v = base.clone();
                v[a] += sa * hs;
                v[b] += sb * hs;
                at(&v).map(|r| r.0)
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?) / (4.0 * hs * hs);
            h[(p + a, p + b)] = v;
            h[(p + b, p + a)] = v;
        }
    }
    h.scale(-1.0);
    Some(h)
}

pub fn fit_armax(design: &RegressionDesign) -> Result<ArmaxFit> {
    fit_armax_with(design, &ArmaxOptions::default())
}

/// Maximum-likelihood fit; BFGS over the unconstrained ARMA parameters.
pub fn fit_armax_with(design: &RegressionDesign, options: &ArmaxOptions) -> Result<ArmaxFit> {
    let order = options.order;
    if order.ar > 2 || order.ma > 1 {
        return Err(Error::config(format!("ARMA order ({}, {}) is not supported", order.ar, order.ma)));
    }
    let n = design.n_obs();
    let k = design.n_cols() + order.free() + 1;
    if n <= 10 * k {
        return Err(Error::data(format!(
            "{n} observations are too few for {k} free parameters"
        )));
    }
    let start = profile(design, Arma::WHITE)
        .ok_or_else(|| Error::data("design matrix is rank deficient"))?;
    let objective = |u: &[f64]| match profile(design, Arma::from_unconstrained(order, u)) {
        Some(p) => -p.loglik,
        None => f64::INFINITY,
    };
    let opts = BfgsOptions {
        max_iter: options.max_iter,
        ..BfgsOptions::default()
    };
    let min = bfgs(objective, &vec![0.0; order.free()], &opts);
    let arma = Arma::from_unconstrained(order, &min.x);
    let prof = profile(design, arma).ok_or_else(|| Error::data("likelihood undefined at the optimum"))?;
    if !min.converged {
        let mut best = prof.beta.clone();
        best.extend(arma.free(order));
        best.push(prof.sigma2);
        return Err(Error::NonConvergence {
            iterations: min.iterations,
            loglik: prof.loglik,
            best,
        });
    }
    debug!(
        "armax converged in {} iterations: loglik {} (start {})",
        min.iterations, prof.loglik, start.loglik
    );
    let p = design.n_cols();
    let q = order.free();
    let cov = observed_information(design, order, arma, &prof).and_then(|info| info.inverse_spd());
    let se_flagged = cov.is_none();
    if se_flagged {
        warn!("observed information is singular; standard errors flagged");
    }
    let se = |i: usize| cov.as_ref().map_or(f64::NAN, |c| c[(i, i)].max(0.0).sqrt());
    let coefficients = design
        .names
        .iter()
        .zip(&prof.beta)
        .enumerate()
        .map(|(i, (name, &b))| Coefficient::new(name.clone(), b, se(i)))
        .collect();
    let arma_se = (0..q).map(|a| se(p + a)).collect();
    let sigma = prof.sigma2.sqrt();
    let e = residuals(&prof.white, &prof.beta);
    let mut residual_segments = Vec::with_capacity(design.segments.len());
    let mut offset = 0;
    for s in &design.segments {
        residual_segments.push(e[offset..offset + s.len()].iter().map(|v| v / sigma).collect());
        offset += s.len();
    }
    Ok(ArmaxFit {
        coefficients,
        order,
        phi1: arma.phi1,
        phi2: arma.phi2,
        psi: arma.psi,
        arma_se,
        sigma2: prof.sigma2,
        loglik: prof.loglik,
        start_loglik: start.loglik,
        aic: 2.0 * k as f64 - 2.0 * prof.loglik,
        n_obs: n,
        n_segments: design.segments.len(),
        n_params: k,
        iterations: min.iterations,
        se_flagged,
        residuals: residual_segments,
    })
}
