//! Single-hashtag streams whose cumulative mean is a logistic curve.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::episode::HashtagEpisode;
use crate::error::{Error, Result};
use crate::event::TweetEvent;
use crate::trajectory::CumulativeCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticTruth {
    pub size: f64,
    pub rate: f64,
    pub midpoint: f64,
    /// `L k / 4`, tweets per minute.
    pub growth: f64,
    /// `midpoint + ln(99) / k`.
    pub t_e: f64,
    /// Emitted tweets per minute from minute 0.
    pub minute_counts: Vec<u64>,
}

impl LogisticTruth {
    pub fn new(size: f64, rate: f64, midpoint: f64) -> Self {
        Self {
            size,
            rate,
            midpoint,
            growth: size * rate / 4.0,
            t_e: midpoint + 99f64.ln() / rate,
            minute_counts: Vec::new(),
        }
    }

    pub fn mean(&self, t: f64) -> f64 {
        self.size / (1.0 + (-self.rate * (t - self.midpoint)).exp())
    }
}

/// Minutes covering the curve out to well past saturation.
pub fn horizon(rate: f64, midpoint: f64) -> usize {
    (midpoint + 2.0 * 99f64.ln() / rate).ceil().max(8.0) as usize
}

/// Noise-free logistic values on the minute grid.
pub fn logistic_curve(size: f64, rate: f64, midpoint: f64) -> CumulativeCurve<f64> {
    let t = LogisticTruth::new(size, rate, midpoint);
    let counts = (0..horizon(rate, midpoint)).map(|m| t.mean(m as f64)).collect();
    CumulativeCurve::new(0, counts).expect("logistic is nondecreasing")
}

/// Per-minute Poisson counts with logistic mean increments.
pub fn poisson_logistic_curve(size: f64, rate: f64, midpoint: f64, seed: u64) -> CumulativeCurve<f64> {
    let t = LogisticTruth::new(size, rate, midpoint);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev = 0.0;
    let inc: Vec<f64> = (0..horizon(rate, midpoint))
        .map(|m| {
            let cur = t.mean(m as f64);
            let mean = cur - prev;
            prev = cur;
            if mean > 0.0 {
                Poisson::new(mean).expect("positive mean").sample(&mut rng)
            } else {
                0.0
            }
        })
        .collect();
    CumulativeCurve::from_increments(0, &inc).expect("nonnegative increments")
}

/// `round(L)` tweets whose arrival times are logistic draws truncated to the horizon.
pub fn gen_logistic_stream(size: f64, rate: f64, midpoint: f64, seed: u64) -> Result<(HashtagEpisode, LogisticTruth)> {
    if !(size >= 1.0) || !(rate > 0.0) {
        return Err(Error::config("logistic stream needs L >= 1 and k > 0"));
    }
    let mut truth = LogisticTruth::new(size, rate, midpoint);
    let h = horizon(rate, midpoint);
    let cdf = |t: f64| 1.0 / (1.0 + (-rate * (t - midpoint)).exp());
    let (lo, hi) = (cdf(0.0), cdf(h as f64));
    let n = size.round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times: Vec<i64> = (0..n)
        .map(|_| {
            let u = lo + (hi - lo) * rng.random::<f64>();
            let t = midpoint + (u / (1.0 - u)).ln() / rate;
            ((t * 60.0).floor() as i64).clamp(0, h as i64 * 60 - 1)
        })
        .collect();
    times.sort_unstable();
    let mut counts = vec![0u64; h];
    let events = times
        .iter()
        .enumerate()
        .map(|(i, &ts)| {
            counts[(ts / 60) as usize] += 1;
            TweetEvent {
                event_id: format!("l{i:07}"),
                timestamp: ts,
                user_id: format!("u{i}"),
                follower_count: 100,
                text: "#planted".to_string(),
                hashtags: ["planted".to_string()].into_iter().collect(),
                retweet_of: None,
                reply_to: None,
            }
        })
        .collect::<Vec<_>>();
    truth.minute_counts = counts;
    Ok((
        HashtagEpisode {
            tag: "planted".to_string(),
            episode_id: "logistic".to_string(),
            t0: events.first().map_or(0, |e| e.timestamp),
            events,
        },
        truth,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_event() {
        let (ep, truth) = gen_logistic_stream(1.0, 0.05, 100.0, 3).unwrap();
        assert_eq!(ep.events.len(), 1);
        assert_eq!(truth.minute_counts.iter().sum::<u64>(), 1);
    }

    #[test]
    fn analytic_truth() {
        let t = LogisticTruth::new(1e4, 0.02, 300.0);
        assert!((t.growth - 50.0).abs() < 1e-12);
        assert!((t.t_e - (300.0 + 99f64.ln() / 0.02)).abs() < 1e-12);
    }
}
