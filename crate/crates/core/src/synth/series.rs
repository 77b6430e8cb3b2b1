//! Simulated regression designs with ARMA(2,1) errors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth::{RegressionDesign, Segment, INTERCEPT, VIBRANCY_COLUMNS};

/// True parameters of a growth-model simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaxTruth {
    pub intercept: f64,
    /// Slopes on `rt, rp, src_alpha, follow_alpha`.
    pub beta: Vec<f64>,
    pub phi1: f64,
    pub phi2: f64,
    pub psi: f64,
    pub sigma2: f64,
}

impl ArmaxTruth {
    /// Slopes used by the recovery checks.
    pub fn reference() -> Self {
        Self {
            intercept: 0.0,
            beta: vec![0.3, 0.15, 0.001, 0.1],
            phi1: 0.5,
            phi2: -0.2,
            psi: 0.3,
            sigma2: 1.0,
        }
    }

    /// Intercept followed by slopes, in design column order.
    pub fn coefficients(&self) -> Vec<f64> {
        std::iter::once(self.intercept).chain(self.beta.iter().copied()).collect()
    }

    fn check(&self) -> Result<()> {
        let (a, b) = (self.phi1, self.phi2);
        if !(a + b < 1.0 && b - a < 1.0 && b.abs() < 1.0) {
            return Err(Error::config(format!("AR({a}, {b}) is not stationary")));
        }
        if self.psi.abs() >= 1.0 {
            return Err(Error::config(format!("MA({}) is not invertible", self.psi)));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::config("innovation variance must be positive"));
        }
        if self.beta.is_empty() || self.beta.len() > VIBRANCY_COLUMNS.len() {
            return Err(Error::config("between one and four slopes are supported"));
        }
        Ok(())
    }
}

/// Minutes simulated and discarded before each segment so its errors start stationary.
const BURN_IN: usize = 300;

/// Simulates `segments` independent series of `length` minutes.
///
/// Predictors mimic lagged vibrancy features: `log1p` of Poisson retweet and
/// reply counts whose log-means follow AR(1) paths, a running count of
/// retweet sources, and `log1p` of a running maximum of log-normal audiences.
pub fn gen_armax_series(truth: &ArmaxTruth, segments: usize, length: usize, seed: u64) -> Result<RegressionDesign> {
    truth.check()?;
    if segments == 0 || length == 0 {
        return Err(Error::config("need at least one segment of positive length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, truth.sigma2.sqrt()).expect("positive variance");
    let drift = Normal::new(0.0, 0.35).expect("valid");
    let audience = LogNormal::new(7.0, 1.2).expect("valid");
    let p = truth.beta.len();
    let mut names = vec![INTERCEPT.to_string()];
    names.extend(VIBRANCY_COLUMNS[..p].iter().map(|s| s.to_string()));
    let mut out = Vec::with_capacity(segments);
    for s in 0..segments {
        let (mut e1, mut e2, mut v1) = (0.0, 0.0, 0.0);
        let mut errors = Vec::with_capacity(length);
        for t in 0..BURN_IN + length {
            let v = noise.sample(&mut rng);
            let e = truth.phi1 * e1 + truth.phi2 * e2 + v + truth.psi * v1;
            e2 = e1;
            e1 = e;
            v1 = v;
            if t >= BURN_IN {
                errors.push(e);
            }
        }
        let (mut w_rt, mut w_rp) = (0.0f64, 0.0f64);
        let mut sources = 0.0;
        let mut top = 0.0f64;
        let mut y = Vec::with_capacity(length);
        let mut x = Vec::with_capacity(length);
        for e in errors {
            w_rt = 0.7 * w_rt + drift.sample(&mut rng);
            w_rp = 0.7 * w_rp + drift.sample(&mut rng);
            let rt: f64 = Poisson::new((1.6 + w_rt).exp()).expect("positive mean").sample(&mut rng);
            let rp: f64 = Poisson::new((0.6 + w_rp).exp()).expect("positive mean").sample(&mut rng);
            sources += (rt * 0.5).round();
            top = top.max(audience.sample(&mut rng));
            let full = [rt.ln_1p(), rp.ln_1p(), sources, top.ln_1p()];
            let mut row = vec![1.0];
            row.extend_from_slice(&full[..p]);
            let mean: f64 = truth.intercept + row[1..].iter().zip(&truth.beta).map(|(a, b)| a * b).sum::<f64>();
            y.push(mean + e);
            x.push(row);
        }
        out.push(Segment {
            tag: format!("sim{s:04}"),
            first_minute: 1,
            y,
            x,
        });
    }
    RegressionDesign::new(names, out)
}
