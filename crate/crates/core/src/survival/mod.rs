//! Persistence models: Cox proportional hazards and Kaplan-Meier curves.

mod cox;
mod km;

pub use cox::{fit_cox, fit_cox_counting, hazard_effect, CoxFit};
pub use km::{km, median_survival, KMCurve, KMRow};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::TagSeries;
use crate::error::{Error, Result};
use crate::vibrancy::{aggregate_at, AggregateVibrancy};

pub const ENV_COVARIATES: [&str; 3] = ["rt_env", "rp_env", "src_env_alpha"];

/// Time from the turning point to saturation, with covariates at the turning point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub tag: String,
    pub duration: f64,
    /// Saturation observed inside the tracking window.
    pub event: bool,
    pub covariates: Vec<f64>,
}

/// One at-risk interval `(start, stop]` of a subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingProcessRow {
    pub tag: String,
    pub start: f64,
    pub stop: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
}

pub fn fixed_covariate_names() -> Vec<String> {
    AggregateVibrancy::NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn counting_covariate_names() -> Vec<String> {
    let mut names = fixed_covariate_names();
    names.extend(ENV_COVARIATES.iter().map(|s| s.to_string()));
    names
}

/// One record per tag; censored when saturation is only reached at the window's last minute.
pub fn build_records(series: &[&TagSeries]) -> Result<Vec<SurvivalRecord>> {
    series
        .iter()
        .map(|s| {
            let sum = &s.summary;
            let agg = aggregate_at(&s.frames, sum.t_star)?;
            let last = s.last_minute();
            let event = sum.t_e < last;
            let end = if event { sum.t_e } else { last };
            Ok(SurvivalRecord {
                tag: s.tag.clone(),
                duration: (end - sum.t_star) as f64,
                event,
                covariates: agg.to_vec(),
            })
        })
        .collect()
}

/// Minute-resolution rows with environmental covariates read at each interval's start.
pub fn build_counting_rows(series: &[&TagSeries]) -> Result<Vec<CountingProcessRow>> {
    let records = build_records(series)?;
    let mut rows = Vec::new();
    for (s, r) in series.iter().zip(&records) {
        let steps = r.duration as i64;
        if steps <= 0 {
            warn!("{}: zero time at risk after the turning point, no counting rows", s.tag);
            continue;
        }
        for k in 0..steps {
            let minute = s.summary.t_star + k;
            let env = s
                .env_frame(minute)
                .ok_or_else(|| Error::data(format!("{}: no environment frame for minute {minute}", s.tag)))?;
            let mut covariates = r.covariates.clone();
            covariates.extend([env.rt_env as f64, env.rp_env as f64, env.src_env_alpha as f64]);
            rows.push(CountingProcessRow {
                tag: s.tag.clone(),
                start: k as f64,
                stop: (k + 1) as f64,
                event: r.event && k + 1 == steps,
                covariates,
            });
        }
    }
    Ok(rows)
}

/// A single `(0, duration]` row per record.
pub fn rows_from_records(records: &[SurvivalRecord]) -> Vec<CountingProcessRow> {
    records
        .iter()
        .map(|r| CountingProcessRow {
            tag: r.tag.clone(),
            start: 0.0,
            stop: r.duration,
            event: r.event,
            covariates: r.covariates.clone(),
        })
        .collect()
}
