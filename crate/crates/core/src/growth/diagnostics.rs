//! Residual autocorrelation checks for a fitted growth model.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::ArmaxFit;
use crate::error::{Error, Result};

pub const ACF_LAGS: usize = 20;
pub const LJUNG_BOX_LAG: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualDiagnostics {
    pub n: usize,
    /// Autocorrelations at lags 1..=20.
    pub acf: Vec<f64>,
    pub pacf: Vec<f64>,
    /// Half-width of the approximate 95% band, `2 / sqrt(n)`.
    pub band: f64,
    pub acf_outside: usize,
    pub ljung_box: f64,
    pub ljung_box_df: usize,
    pub ljung_box_p: f64,
}

/// Autocorrelations pooled over segments; lagged pairs never straddle two tags.
pub fn pooled_acf(segments: &[Vec<f64>], max_lag: usize) -> Vec<f64> {
    let n: usize = segments.iter().map(Vec::len).sum();
    let mean = segments.iter().flatten().sum::<f64>() / n as f64;
    let c0: f64 = segments.iter().flatten().map(|v| (v - mean).powi(2)).sum();
    (1..=max_lag)
        .map(|k| {
            let ck: f64 = segments
                .iter()
                .filter(|s| s.len() > k)
                .map(|s| (k..s.len()).map(|t| (s[t] - mean) * (s[t - k] - mean)).sum::<f64>())
                .sum();
            if c0 > 0.0 {
                ck / c0
            } else {
                0.0
            }
        })
        .collect()
}

/// Partial autocorrelations by the Durbin-Levinson recursion.
pub fn pacf_from_acf(acf: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(acf.len());
    let mut phi: Vec<f64> = Vec::new();
    for k in 0..acf.len() {
        let num = acf[k] - phi.iter().enumerate().map(|(j, p)| p * acf[k - 1 - j]).sum::<f64>();
        let den = 1.0 - phi.iter().enumerate().map(|(j, p)| p * acf[j]).sum::<f64>();
        let a = if den.abs() > f64::EPSILON { num / den } else { 0.0 };
        let next: Vec<f64> = (0..k).map(|j| phi[j] - a * phi[k - 1 - j]).chain([a]).collect();
        phi = next;
        out.push(a);
    }
    out
}

pub fn ljung_box(acf: &[f64], n: usize, lag: usize) -> f64 {
    let nf = n as f64;
    nf * (nf + 2.0) * (1..=lag.min(acf.len())).map(|k| acf[k - 1].powi(2) / (nf - k as f64)).sum::<f64>()
}

pub fn diagnostics(fit: &ArmaxFit) -> Result<ResidualDiagnostics> {
    let n: usize = fit.residuals.iter().map(Vec::len).sum();
    if n <= ACF_LAGS {
        return Err(Error::data(format!("{n} residuals are too few for diagnostics")));
    }
    let acf = pooled_acf(&fit.residuals, ACF_LAGS);
    let pacf = pacf_from_acf(&acf);
    let band = 2.0 / (n as f64).sqrt();
    let q = ljung_box(&acf, n, LJUNG_BOX_LAG);
    let df = LJUNG_BOX_LAG.saturating_sub(fit.order.free()).max(1);
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::data(e.to_string()))?;
    Ok(ResidualDiagnostics {
        n,
        acf_outside: acf.iter().filter(|r| r.abs() > band).count(),
        acf,
        pacf,
        band,
        ljung_box: q,
        ljung_box_df: df,
        ljung_box_p: chi.sf(q),
    })
}
