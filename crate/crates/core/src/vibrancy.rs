//! Per-minute conversational-vibrancy features and their environmental counterparts.
//!
//! Minutes are indexed from the episode's `event_start`: an event at timestamp
//! `ts` falls in minute `floor((ts - event_start) / 60)`. A tag's frames run from
//! its onset minute to the last minute of the tracking window.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::episode::{EpisodeConfig, HashtagEpisode};
use crate::error::{Error, Result};
use crate::event::EventStream;

/// Features of one tag in one minute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibrancyFrame {
    pub minute: i64,
    /// New tweets carrying the tag.
    pub y: u64,
    pub rt: u64,
    pub rp: u64,
    /// Distinct retweeted originals so far.
    pub src_alpha: u64,
    /// Mean follower count of the top decile of users so far.
    pub follow_alpha: f64,
}

/// Activity outside the tag in one minute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvFrame {
    pub minute: i64,
    pub rt_env: u64,
    pub rp_env: u64,
    pub src_env_alpha: u64,
}

/// Aggregates up to a cut minute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateVibrancy {
    pub rt_alpha: f64,
    pub rp_alpha: f64,
    pub src_alpha: f64,
    pub follow_alpha: f64,
}

impl AggregateVibrancy {
    pub const NAMES: [&'static str; 4] = ["rt_alpha", "rp_alpha", "src_alpha", "follow_alpha"];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.rt_alpha, self.rp_alpha, self.src_alpha, self.follow_alpha]
    }
}

pub const TOP_DECILE: f64 = 0.9;

fn top_count(n: usize, quantile: f64) -> usize {
    (((1.0 - quantile) * n as f64) - 1e-9).ceil().max(1.0) as usize
}

/// Mean follower count over the `ceil((1 - quantile) * n)` largest accounts.
pub fn expected_audience(users: &[(String, u64)], quantile: f64) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::data("expected audience of an empty user set"));
    }
    if !(0.0..1.0).contains(&quantile) {
        return Err(Error::data(format!("quantile {quantile} outside [0, 1)")));
    }
    let mut sorted: Vec<&(String, u64)> = users.iter().collect();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let m = top_count(sorted.len(), quantile);
    let total: f64 = sorted[..m].iter().map(|(_, c)| *c as f64).sum();
    Ok(total / m as f64)
}

fn top_mean_in_place(counts: &mut [u64], quantile: f64) -> f64 {
    let m = top_count(counts.len(), quantile);
    if m < counts.len() {
        counts.select_nth_unstable_by(m - 1, |a, b| b.cmp(a));
    }
    counts[..m].iter().map(|&c| c as f64).sum::<f64>() / m as f64
}

fn frame_range(episode: &HashtagEpisode, config: &EpisodeConfig) -> (i64, i64) {
    let first = config.minute_of(episode.t0).max(0);
    (first, config.tracking_minutes().max(first + 1))
}

/// One frame per minute from the onset minute through the end of tracking.
pub fn frame_series(episode: &HashtagEpisode, config: &EpisodeConfig) -> Vec<VibrancyFrame> {
    let (first, end) = frame_range(episode, config);
    let mut frames: Vec<VibrancyFrame> = (first..end)
        .map(|minute| VibrancyFrame {
            minute,
            y: 0,
            rt: 0,
            rp: 0,
            src_alpha: 0,
            follow_alpha: 0.0,
        })
        .collect();
    let mut sources: HashSet<&str> = HashSet::new();
    let mut followers: HashMap<&str, u64> = HashMap::new();
    let mut scratch: Vec<u64> = Vec::new();
    let mut src = 0u64;
    let mut follow = 0.0;
    let mut events = episode.events.iter().peekable();
    for frame in frames.iter_mut() {
        let mut changed = false;
        while let Some(e) = events.peek() {
            let m = config.minute_of(e.timestamp);
            if m > frame.minute {
                break;
            }
            let e = events.next().expect("peeked");
            if m < frame.minute {
                continue;
            }
            frame.y += 1;
            if let Some(orig) = &e.retweet_of {
                frame.rt += 1;
                sources.insert(orig.as_str());
            } else if e.is_reply() {
                frame.rp += 1;
            }
            // a user's audience is the largest follower count seen so far
            let entry = followers.entry(e.user_id.as_str()).or_insert(0);
            *entry = (*entry).max(e.follower_count);
            changed = true;
        }
        if changed {
            src = sources.len() as u64;
            scratch.clear();
            scratch.extend(followers.values().copied());
            follow = top_mean_in_place(&mut scratch, TOP_DECILE);
        }
        frame.src_alpha = src;
        frame.follow_alpha = follow;
    }
    frames
}

/// Per-minute counts over tracked events that do not carry the tag.
pub fn env_series(episode: &HashtagEpisode, stream: &EventStream, config: &EpisodeConfig) -> Vec<EnvFrame> {
    let (first, end) = frame_range(episode, config);
    let len = (end - first) as usize;
    let mut rt = vec![0u64; len];
    let mut rp = vec![0u64; len];
    let mut new_sources = vec![0u64; len];
    let mut sources: HashSet<&str> = HashSet::new();
    let mut carried = 0u64;
    for e in config.tracked(stream) {
        if e.has_tag(&episode.tag) {
            continue;
        }
        let m = config.minute_of(e.timestamp);
        if let Some(orig) = &e.retweet_of {
            let fresh = sources.insert(orig.as_str());
            if m < first {
                carried += u64::from(fresh);
                continue;
            }
            let i = (m - first) as usize;
            rt[i] += 1;
            new_sources[i] += u64::from(fresh);
        } else if e.is_reply() && m >= first {
            rp[(m - first) as usize] += 1;
        }
    }
    let mut acc = carried;
    (0..len)
        .map(|i| {
            acc += new_sources[i];
            EnvFrame {
                minute: first + i as i64,
                rt_env: rt[i],
                rp_env: rp[i],
                src_env_alpha: acc,
            }
        })
        .collect()
}

/// Totals up to and including `cut`; levels read at `cut`.
pub fn aggregate_at(frames: &[VibrancyFrame], cut: i64) -> Result<AggregateVibrancy> {
    let first = frames.first().map(|f| f.minute);
    let last = frames.last().map(|f| f.minute);
    match (first, last) {
        (Some(lo), Some(hi)) if (lo..=hi).contains(&cut) => {
            let upto = &frames[..=((cut - lo) as usize)];
            let at = upto.last().expect("nonempty");
            Ok(AggregateVibrancy {
                rt_alpha: upto.iter().map(|f| f.rt as f64).sum(),
                rp_alpha: upto.iter().map(|f| f.rp as f64).sum(),
                src_alpha: at.src_alpha as f64,
                follow_alpha: at.follow_alpha,
            })
        }
        _ => Err(Error::data(format!(
            "cut minute {cut} outside frame range {first:?}..={last:?}"
        ))),
    }
}
