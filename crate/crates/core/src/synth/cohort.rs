//! Survival cohorts with exponential event times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::SurvivalRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTruth {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub rate: f64,
    pub censor_time: f64,
    /// Latent event times before censoring.
    pub event_times: Vec<f64>,
}

/// Hazard `rate * exp(beta' x)`; the first covariate is the group indicator `i % 2`,
/// the others are independent standard normals. Pass `f64::INFINITY` to disable censoring.
pub fn gen_survival_cohort(
    beta: &[f64],
    rate: f64,
    n: usize,
    censor_time: f64,
    seed: u64,
) -> Result<(Vec<SurvivalRecord>, CohortTruth)> {
    if !(rate > 0.0) || n < 2 || beta.is_empty() {
        return Err(Error::config("cohort needs rate > 0, n >= 2 and at least one coefficient"));
    }
    if !(censor_time >= 0.0) {
        return Err(Error::config("censoring time must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..beta.len())
        .map(|j| if j == 0 { "group".to_string() } else { format!("x{j}") })
        .collect();
    let mut records = Vec::with_capacity(n);
    let mut event_times = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = vec![(i % 2) as f64];
        for _ in 1..beta.len() {
            x.push(StandardNormal.sample(&mut rng));
        }
        let hazard = rate * x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>().exp();
        let u: f64 = 1.0 - rng.random::<f64>();
        let t = -u.ln() / hazard;
        event_times.push(t);
        records.push(SurvivalRecord {
            tag: format!("subject{i:05}"),
            duration: t.min(censor_time),
            event: t <= censor_time,
            covariates: x,
        });
    }
    Ok((
        records,
        CohortTruth {
            names,
            beta: beta.to_vec(),
            rate,
            censor_time,
            event_times,
        },
    ))
}

/// Exponential quantiles `(i + 1/2) / n` rounded to whole minutes, all observed.
pub fn quantile_cohort(n: usize, median: f64) -> Vec<SurvivalRecord> {
    let rate = std::f64::consts::LN_2 / median;
    (0..n)
        .map(|i| {
            let u = (i as f64 + 0.5) / n as f64;
            SurvivalRecord {
                tag: format!("q{i:05}"),
                duration: (-(1.0 - u).ln() / rate).round(),
                event: true,
                covariates: vec![],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_censoring_time_censors_everything() {
        let (r, _) = gen_survival_cohort(&[0.5], 0.1, 50, 0.0, 1).unwrap();
        assert!(r.iter().all(|r| !r.event && r.duration == 0.0));
    }

    #[test]
    fn quantiles_are_sorted() {
        let r = quantile_cohort(11, 120.0);
        assert_eq!(r[5].duration, 120.0);
        assert!(r.windows(2).all(|w| w[0].duration <= w[1].duration));
    }
}
