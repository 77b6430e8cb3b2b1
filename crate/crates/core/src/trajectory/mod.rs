//! Growth, persistence and critical time points of cumulative adoption curves.

mod spline;

pub use spline::{LambdaCriterion, SplineFit, SplineOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vibrancy::VibrancyFrame;

/// Fraction of the final size that marks saturation.
pub const SATURATION: f64 = 0.99;
/// Tangent deviation, as a fraction of the final size, that marks the turning point.
pub const TURNING_DELTA: f64 = 0.01;

/// Cumulative tweet totals on a one-minute grid starting at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeCurve<F> {
    pub start: i64,
    pub counts: Vec<F>,
}

impl<F: Real> CumulativeCurve<F> {
    pub fn new(start: i64, counts: Vec<F>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::data("empty cumulative curve"));
        }
        if counts.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::data("cumulative counts must be nondecreasing"));
        }
        Ok(Self { start, counts })
    }

    /// Builds the curve from per-minute new-tweet counts.
    pub fn from_increments(start: i64, increments: &[F]) -> Result<Self> {
        let mut acc = F::zero();
        let counts = increments
            .iter()
            .map(|&v| {
                acc += v;
                acc
            })
            .collect();
        Self::new(start, counts)
    }

    pub fn from_frames(frames: &[VibrancyFrame]) -> Result<Self> {
        let start = frames.first().map(|f| f.minute).unwrap_or(0);
        let inc: Vec<F> = frames.iter().map(|f| F::lit(f.y as f64)).collect();
        Self::from_increments(start, &inc)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn end(&self) -> i64 {
        self.start + self.counts.len() as i64 - 1
    }

    pub fn final_size(&self) -> F {
        *self.counts.last().expect("nonempty curve")
    }

    pub fn minute(&self, index: usize) -> i64 {
        self.start + index as i64
    }

    fn increment(&self, i: usize) -> F {
        if i == 0 {
            self.counts[0]
        } else {
            self.counts[i] - self.counts[i - 1]
        }
    }

    /// Count at a minute, clamped to the grid (zero before the start).
    pub fn at(&self, minute: i64) -> F {
        if minute < self.start {
            F::zero()
        } else {
            self.counts[((minute - self.start) as usize).min(self.counts.len() - 1)]
        }
    }

    /// Minutes with at least one new tweet.
    pub fn support(&self) -> usize {
        (0..self.len()).filter(|&i| self.increment(i) > F::zero()).count()
    }

    /// First minute with a tweet.
    pub fn onset(&self) -> i64 {
        (0..self.len())
            .find(|&i| self.counts[i] > F::zero())
            .map_or(self.start, |i| self.minute(i))
    }

    /// First minute whose count reaches `quantile` of the final size.
    pub fn saturation_minute(&self, quantile: F) -> i64 {
        let target = quantile * self.final_size();
        let idx = self.counts.partition_point(|&c| c < target);
        self.minute(idx.min(self.len() - 1))
    }
}

/// Piecewise-linear fallback for curves with too few support minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct SecantFit<F> {
    start: i64,
    counts: Vec<F>,
}

/// Smoothed curve used for slope and tangent computations.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveFit<F> {
    Spline(SplineFit<F>),
    Secant(SecantFit<F>),
}

impl<F: Real> CurveFit<F> {
    pub fn value(&self, t: F) -> F {
        match self {
            CurveFit::Spline(s) => s.value(t),
            CurveFit::Secant(s) => {
                let x = t - F::lit(s.start as f64);
                if x <= -F::one() {
                    return F::zero();
                }
                let n = s.counts.len();
                let hi = x.ceil().to_isize().unwrap_or(0).clamp(0, n as isize - 1) as usize;
                let prev = if hi == 0 { F::zero() } else { s.counts[hi - 1] };
                if x >= F::from_count(n - 1) {
                    return s.counts[n - 1];
                }
                let frac = x - (F::from_count(hi) - F::one());
                prev + frac * (s.counts[hi] - prev)
            }
        }
    }

    /// Slope clamped at zero from below.
    pub fn slope(&self, t: F) -> F {
        let raw = match self {
            CurveFit::Spline(s) => s.derivative(t),
            CurveFit::Secant(s) => {
                let x = t - F::lit(s.start as f64);
                let n = s.counts.len();
                if x <= -F::one() || x > F::from_count(n - 1) {
                    F::zero()
                } else {
                    let hi = x.ceil().to_isize().unwrap_or(0).clamp(0, n as isize - 1) as usize;
                    let prev = if hi == 0 { F::zero() } else { s.counts[hi - 1] };
                    s.counts[hi] - prev
                }
            }
        };
        raw.max(F::zero())
    }

    pub fn is_spline(&self) -> bool {
        matches!(self, CurveFit::Spline(_))
    }
}

/// Smoothing spline through the cumulative counts on the minute grid.
pub fn fit_spline<F: Real>(curve: &CumulativeCurve<F>, options: &SplineOptions) -> Result<SplineFit<F>> {
    let support = curve.support();
    if support < 4 {
        return Err(Error::DegenerateCurve { support });
    }
    let x: Vec<F> = (0..curve.len()).map(|i| F::lit(curve.minute(i) as f64)).collect();
    SplineFit::fit(&x, &curve.counts, options)
}

/// Spline when possible, secant slopes otherwise.
pub fn fit_curve<F: Real>(curve: &CumulativeCurve<F>, options: &SplineOptions) -> Result<CurveFit<F>> {
    match fit_spline(curve, options) {
        Ok(s) => Ok(CurveFit::Spline(s)),
        Err(Error::DegenerateCurve { .. }) => Ok(CurveFit::Secant(SecantFit {
            start: curve.start,
            counts: curve.counts.clone(),
        })),
        Err(e) => Err(e),
    }
}

/// Largest clamped slope and where it occurs.
///
/// Grid argmax over the minutes (first wins on ties), refined by golden-section
/// search over the two intervals around the winning knot.
pub fn max_slope<F: Real>(fit: &CurveFit<F>, curve: &CumulativeCurve<F>) -> (F, F) {
    let mut best_i = 0;
    let mut best = F::neg_infinity();
    for i in 0..curve.len() {
        let s = fit.slope(F::lit(curve.minute(i) as f64));
        if s > best {
            best = s;
            best_i = i;
        }
    }
    let t_best = F::lit(curve.minute(best_i) as f64);
    if !fit.is_spline() {
        return (best, t_best);
    }
    let lo = F::lit(curve.minute(best_i.saturating_sub(1)) as f64);
    let hi = F::lit(curve.minute((best_i + 1).min(curve.len() - 1)) as f64);
    let (t_ref, s_ref) = golden_max(|t| fit.slope(t), lo, hi);
    if s_ref > best * (F::one() + F::lit(1e-12)) && s_ref - best > F::epsilon() {
        (s_ref, t_ref)
    } else {
        (best, t_best)
    }
}

fn golden_max<F: Real>(f: impl Fn(F) -> F, mut a: F, mut b: F) -> (F, F) {
    let ratio = F::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if (b - a).abs() < F::lit(1e-9) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let t = (a + b) / F::lit(2.0);
    (t, f(t))
}

/// Critical time points of one curve, in minutes since the episode start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoints<F> {
    pub t0: i64,
    pub t_star: i64,
    pub t_e: i64,
    /// Location of the largest slope.
    pub t_m: F,
    pub growth: F,
}

/// Onset, turning and saturation minutes.
///
/// The turning point is the first minute at or after the max-slope location
/// where the tangent exceeds the fit by more than `delta` of the final size.
pub fn critical_points<F: Real>(fit: &CurveFit<F>, curve: &CumulativeCurve<F>, delta: F) -> CriticalPoints<F> {
    let (growth, t_m) = max_slope(fit, curve);
    turning_point(fit, curve, growth, t_m, delta, F::lit(SATURATION))
}

fn turning_point<F: Real>(
    fit: &CurveFit<F>,
    curve: &CumulativeCurve<F>,
    growth: F,
    t_m: F,
    delta: F,
    saturation: F,
) -> CriticalPoints<F> {
    let t0 = curve.onset();
    let t_e = curve.saturation_minute(saturation).max(t0);
    let threshold = delta * curve.final_size();
    let anchor = fit.value(t_m);
    let first = t_m.ceil().to_i64().unwrap_or(t0).max(t0);
    let mut t_star = t_e;
    for t in first..=t_e {
        let tf = F::lit(t as f64);
        let tangent = anchor + growth * (tf - t_m);
        if tangent - fit.value(tf) > threshold {
            t_star = t;
            break;
        }
    }
    CriticalPoints {
        t0,
        t_star: t_star.clamp(t0, t_e),
        t_e,
        t_m,
        growth,
    }
}

/// Growth and persistence summary of one hashtag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary<F> {
    pub t0: i64,
    pub t_star: i64,
    pub t_e: i64,
    /// Largest slope of the fitted curve, tweets per minute.
    pub growth: F,
    /// `t_e - t0` in minutes.
    pub persistence: i64,
    pub final_size: F,
    pub t_m: F,
    pub spline: bool,
}

/// Curve, fit and summary for one hashtag.
#[derive(Debug, Clone)]
pub struct CurveAnalysis<F> {
    pub curve: CumulativeCurve<F>,
    pub fit: CurveFit<F>,
    pub summary: CurveSummary<F>,
}

impl<F: Real> CurveAnalysis<F> {
    /// `(minute, observed, fitted, tangent)` rows for plotting.
    pub fn plot_rows(&self) -> Vec<(i64, F, F, F)> {
        let s = &self.summary;
        let anchor = self.fit.value(s.t_m);
        (0..self.curve.len())
            .map(|i| {
                let m = self.curve.minute(i);
                let mf = F::lit(m as f64);
                (m, self.curve.counts[i], self.fit.value(mf), anchor + s.growth * (mf - s.t_m))
            })
            .collect()
    }

    /// Turning point under alternative deviation thresholds.
    pub fn turning_sensitivity(&self, deltas: &[F]) -> Vec<(F, i64)> {
        deltas
            .iter()
            .map(|&d| {
                let cp = turning_point(
                    &self.fit,
                    &self.curve,
                    self.summary.growth,
                    self.summary.t_m,
                    d,
                    F::lit(SATURATION),
                );
                (d, cp.t_star)
            })
            .collect()
    }
}

pub fn summarize_curve<F: Real>(curve: CumulativeCurve<F>, options: &SplineOptions) -> Result<CurveAnalysis<F>> {
    let fit = fit_curve(&curve, options)?;
    let cp = critical_points(&fit, &curve, F::lit(TURNING_DELTA));
    let summary = CurveSummary {
        t0: cp.t0,
        t_star: cp.t_star,
        t_e: cp.t_e,
        growth: cp.growth,
        persistence: cp.t_e - cp.t0,
        final_size: curve.final_size(),
        t_m: cp.t_m,
        spline: fit.is_spline(),
    };
    Ok(CurveAnalysis { curve, fit, summary })
}

/// Summarizes a tag from its vibrancy frames.
pub fn summarize<F: Real>(frames: &[VibrancyFrame], options: &SplineOptions) -> Result<CurveAnalysis<F>> {
    if frames.iter().all(|f| f.y == 0) {
        return Err(Error::data("hashtag has no tweets in its frames"));
    }
    summarize_curve(CumulativeCurve::from_frames(frames)?, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic(l: f64, k: f64, mid: f64, len: usize) -> CumulativeCurve<f64> {
        let counts = (0..len).map(|t| l / (1.0 + (-k * (t as f64 - mid)).exp())).collect();
        CumulativeCurve::new(0, counts).unwrap()
    }

    #[test]
    fn line_slope() {
        let c = CumulativeCurve::new(0, (0..200).map(|t| 10.0 * t as f64).collect()).unwrap();
        let fit = fit_curve(&c, &SplineOptions::default()).unwrap();
        let (g, _) = max_slope(&fit, &c);
        assert!((g - 10.0).abs() / 10.0 < 0.02);
    }

    #[test]
    fn constant_curve_has_zero_growth() {
        // four one-tweet minutes then flat
        let c = CumulativeCurve::from_increments(0, &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(c.support(), 4);
        let flat = CumulativeCurve::new(3, vec![5.0; 50]).unwrap();
        let fit = CurveFit::Spline(
            SplineFit::fit(
                &(3..53).map(|m| m as f64).collect::<Vec<_>>(),
                &flat.counts,
                &SplineOptions::default(),
            )
            .unwrap(),
        );
        let (g, t) = max_slope(&fit, &flat);
        assert!(g.abs() < 1e-9);
        assert_eq!(t, 3.0);
        assert!(fit_curve(&c, &SplineOptions::default()).unwrap().is_spline());
    }

    #[test]
    fn logistic_growth_and_points() {
        let c = logistic(10_000.0, 0.02, 300.0, 1300);
        let a = summarize_curve(c, &SplineOptions::default()).unwrap();
        let s = a.summary;
        assert!((s.growth - 50.0).abs() / 50.0 < 0.02, "growth {}", s.growth);
        assert!((s.t_m - 300.0).abs() <= 2.0);
        let want_te = 300.0 + 99f64.ln() / 0.02;
        assert!((s.t_e as f64 - want_te).abs() <= 2.0, "t_e {}", s.t_e);
        assert!(s.t0 <= s.t_star && s.t_star <= s.t_e);
    }

    #[test]
    fn single_minute_burst() {
        let mut inc = vec![0.0; 30];
        inc[0] = 40.0;
        let c = CumulativeCurve::from_increments(12, &inc).unwrap();
        let a = summarize_curve(c, &SplineOptions::default()).unwrap();
        assert!(!a.summary.spline);
        assert_eq!((a.summary.t0, a.summary.t_star, a.summary.t_e), (12, 12, 12));
        assert_eq!(a.summary.persistence, 0);
        assert_eq!(a.summary.growth, 40.0);
    }

    #[test]
    fn one_tweet() {
        let mut inc = vec![0.0; 10];
        inc[0] = 1.0;
        let a = summarize_curve(CumulativeCurve::from_increments(0, &inc).unwrap(), &SplineOptions::default()).unwrap();
        assert_eq!(a.summary.final_size, 1.0);
        assert_eq!(a.summary.growth, 1.0);
        assert_eq!(a.summary.persistence, 0);
    }

    #[test]
    fn secant_fallback_values() {
        let c = CumulativeCurve::from_increments(5, &[2.0, 0.0, 3.0, 0.0]).unwrap();
        let fit = fit_curve(&c, &SplineOptions::default()).unwrap();
        assert!(!fit.is_spline());
        assert_eq!(fit.value(5.0), 2.0);
        assert_eq!(fit.value(4.0), 0.0);
        assert_eq!(fit.value(6.5), 3.5);
        assert_eq!(fit.slope(7.0), 3.0);
        let (g, t) = max_slope(&fit, &c);
        assert_eq!((g, t), (3.0, 7.0));
    }

    #[test]
    fn rejects_decreasing_counts() {
        assert!(CumulativeCurve::new(0, vec![1.0, 0.5]).is_err());
    }
}
