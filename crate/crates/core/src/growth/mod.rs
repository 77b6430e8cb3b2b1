//! Class-level growth model: new tweets regressed on lagged vibrancy with ARMA(2,1) errors.

mod armax;
mod diagnostics;

pub use armax::{fit_armax, fit_armax_with, ArmaOrder, ArmaxFit, ArmaxOptions};
pub use crate::coefficient::Coefficient;
pub use diagnostics::{diagnostics, ResidualDiagnostics, ACF_LAGS, LJUNG_BOX_LAG};

use log::info;
use serde::{Deserialize, Serialize};

use crate::dataset::TagSeries;
use crate::error::{Error, Result};

/// Shortest onset-to-turning-point span (minutes) that enters the fit.
pub const MIN_SEGMENT: i64 = 5;

pub const INTERCEPT: &str = "(Intercept)";
pub const VIBRANCY_COLUMNS: [&str; 4] = ["rt", "rp", "src_alpha", "follow_alpha"];
pub const ENV_COLUMNS: [&str; 3] = ["rt_env", "rp_env", "src_env_alpha"];

/// Consecutive minutes of one hashtag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub tag: String,
    /// Minute of the first response row.
    pub first_minute: i64,
    pub y: Vec<f64>,
    /// Predictor rows, intercept first.
    pub x: Vec<Vec<f64>>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub tag: String,
    pub span: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDesign {
    pub names: Vec<String>,
    pub segments: Vec<Segment>,
    pub excluded: Vec<Excluded>,
}

impl RegressionDesign {
    pub fn new(names: Vec<String>, segments: Vec<Segment>) -> Result<Self> {
        for s in &segments {
            if s.x.len() != s.y.len() || s.x.iter().any(|r| r.len() != names.len()) {
                return Err(Error::data(format!("segment {} does not match the design columns", s.tag)));
            }
        }
        Ok(Self {
            names,
            segments,
            excluded: Vec::new(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    /// Column names without the intercept.
    pub fn predictors(&self) -> &[String] {
        &self.names[1..]
    }
}

fn ln1p(v: f64) -> f64 {
    v.ln_1p()
}

/// One segment per tag over minutes `t0+1 ..= t*`, predictors lagged one minute.
pub fn build_design(series: &[&TagSeries], with_env: bool) -> Result<RegressionDesign> {
    let mut names = vec![INTERCEPT.to_string()];
    names.extend(VIBRANCY_COLUMNS.iter().map(|s| s.to_string()));
    if with_env {
        names.extend(ENV_COLUMNS.iter().map(|s| s.to_string()));
    }
    let mut segments = Vec::new();
    let mut excluded = Vec::new();
    for s in series {
        let (t0, t_star) = (s.summary.t0, s.summary.t_star);
        let span = t_star - t0;
        if span < MIN_SEGMENT {
            info!("{}: onset-to-turning span {span} min is below {MIN_SEGMENT}, excluded", s.tag);
            excluded.push(Excluded {
                tag: s.tag.clone(),
                span,
            });
            continue;
        }
        let mut y = Vec::with_capacity(span as usize);
        let mut x = Vec::with_capacity(span as usize);
        for t in t0 + 1..=t_star {
            let (Some(now), Some(prev)) = (s.frame(t), s.frame(t - 1)) else {
                return Err(Error::data(format!("{}: no frame for minute {t}", s.tag)));
            };
            y.push(ln1p(now.y as f64));
            let mut row = vec![
                1.0,
                ln1p(prev.rt as f64),
                ln1p(prev.rp as f64),
                prev.src_alpha as f64,
                ln1p(prev.follow_alpha),
            ];
            if with_env {
                let env = s
                    .env_frame(t - 1)
                    .ok_or_else(|| Error::data(format!("{}: no environment frame for minute {}", s.tag, t - 1)))?;
                row.extend([ln1p(env.rt_env as f64), ln1p(env.rp_env as f64), env.src_env_alpha as f64]);
            }
            x.push(row);
        }
        segments.push(Segment {
            tag: s.tag.clone(),
            first_minute: t0 + 1,
            y,
            x,
        });
    }
    if segments.is_empty() {
        return Err(Error::data("class has no segments long enough for the growth model"));
    }
    Ok(RegressionDesign {
        names,
        segments,
        excluded,
    })
}
