//! Product-limit survival estimate with a Greenwood envelope.

use serde::{Deserialize, Serialize};

use super::SurvivalRecord;
use crate::error::{Error, Result};

const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMRow {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
    pub survival: f64,
    /// Greenwood variance of the survival estimate.
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Step function anchored by a `(0, 1)` origin row, then one row per distinct observed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMCurve {
    pub rows: Vec<KMRow>,
}

impl KMCurve {
    /// Survival just after `t`.
    pub fn at(&self, t: f64) -> f64 {
        self.rows
            .iter()
            .take_while(|r| r.time <= t)
            .last()
            .map_or(1.0, |r| r.survival)
    }
}

pub fn km(records: &[SurvivalRecord]) -> Result<KMCurve> {
    if records.is_empty() {
        return Err(Error::data("Kaplan-Meier estimate of an empty sample"));
    }
    let mut times: Vec<(f64, bool)> = records.iter().map(|r| (r.duration, r.event)).collect();
    if times.iter().any(|t| !(t.0 >= 0.0)) {
        return Err(Error::data("durations must be nonnegative"));
    }
    times.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = times.len();
    let mut rows = vec![KMRow {
        time: 0.0,
        at_risk: n,
        events: 0,
        censored: 0,
        survival: 1.0,
        variance: 0.0,
        lower: 1.0,
        upper: 1.0,
    }];
    let mut s = 1.0;
    let mut greenwood = 0.0;
    let mut i = 0;
    while i < n {
        let t = times[i].0;
        let at_risk = n - i;
        let mut d = 0;
        let mut c = 0;
        while i < n && times[i].0 == t {
            if times[i].1 {
                d += 1;
            } else {
                c += 1;
            }
            i += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            greenwood += if d < at_risk {
                d as f64 / (at_risk as f64 * (at_risk - d) as f64)
            } else {
                f64::INFINITY
            };
        }
        let (lower, upper) = if s > 0.0 {
            let half = Z95 * greenwood.sqrt();
            ((s * (-half).exp()).clamp(0.0, 1.0), (s * half.exp()).clamp(0.0, 1.0))
        } else {
            (0.0, 0.0)
        };
        rows.push(KMRow {
            time: t,
            at_risk,
            events: d,
            censored: c,
            survival: s,
            variance: if s > 0.0 { s * s * greenwood } else { 0.0 },
            lower,
            upper,
        });
    }
    Ok(KMCurve { rows })
}

/// Smallest time with survival at or below one half.
pub fn median_survival(curve: &KMCurve) -> Option<f64> {
    curve.rows.iter().find(|r| r.survival <= 0.5).map(|r| r.time)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(d: f64, e: bool) -> SurvivalRecord {
        SurvivalRecord {
            tag: String::new(),
            duration: d,
            event: e,
            covariates: vec![],
        }
    }

    #[test]
    fn three_events() {
        let c = km(&[rec(1.0, true), rec(2.0, true), rec(3.0, true)]).unwrap();
        let s: Vec<f64> = c.rows.iter().map(|r| r.survival).collect();
        for (a, b) in s.iter().zip([1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0]) {
            assert!((a - b).abs() <= f64::EPSILON);
        }
        assert_eq!(median_survival(&c), Some(2.0));
    }

    #[test]
    fn all_censored() {
        let c = km(&[rec(1.0, false), rec(5.0, false)]).unwrap();
        assert!(c.rows.iter().all(|r| r.survival == 1.0));
        assert_eq!(median_survival(&c), None);
    }

    #[test]
    fn ties_and_censoring() {
        // n=5: t=1 two events, t=2 one censored, t=3 one event, t=4 censored
        let c = km(&[rec(1.0, true), rec(1.0, true), rec(2.0, false), rec(3.0, true), rec(4.0, false)]).unwrap();
        let s1 = 3.0 / 5.0;
        let s3 = s1 * (1.0 - 1.0 / 2.0);
        assert_eq!(c.rows[1].survival, s1);
        assert_eq!(c.rows[3].survival, s3);
        let gw = 2.0 / (5.0 * 3.0) + 1.0 / (2.0 * 1.0);
        assert!((c.rows[3].variance - s3 * s3 * gw).abs() < 1e-15);
        assert!(c.rows.iter().all(|r| r.lower <= r.survival && r.survival <= r.upper));
    }
}
