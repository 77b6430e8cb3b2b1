//! Novel / popular / relevant hashtag detection around exogenous events.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{EventStream, TweetEvent};

fn default_peak() -> u32 {
    120
}
fn default_lookback() -> u32 {
    96
}
fn default_tracking() -> u32 {
    77
}
fn default_min_users() -> usize {
    100
}
pub fn default_keywords() -> Vec<String> {
    vec!["debate".into(), "president".into()]
}

/// Windowing rules for one exogenous event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub episode_id: String,
    /// Epoch seconds at which the event starts.
    pub event_start: i64,
    /// Peak window length in minutes.
    #[serde(default = "default_peak")]
    pub peak_duration: u32,
    /// Novelty lookback in hours.
    #[serde(default = "default_lookback")]
    pub lookback: u32,
    /// Tracking window length in hours, starting at `event_start`.
    #[serde(default = "default_tracking")]
    pub tracking: u32,
    #[serde(default = "default_min_users")]
    pub min_users: usize,
    #[serde(default = "default_keywords")]
    pub keywords: Vec<String>,
}

impl EpisodeConfig {
    pub fn new(episode_id: impl Into<String>, event_start: i64) -> Self {
        Self {
            episode_id: episode_id.into(),
            event_start,
            peak_duration: default_peak(),
            lookback: default_lookback(),
            tracking: default_tracking(),
            min_users: default_min_users(),
            keywords: default_keywords(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.peak_duration == 0 {
            return Err(Error::config(format!("{}: peak_duration must be > 0", self.episode_id)));
        }
        if self.lookback == 0 {
            return Err(Error::config(format!("{}: lookback must be > 0", self.episode_id)));
        }
        if u64::from(self.tracking) * 60 < u64::from(self.peak_duration) {
            return Err(Error::config(format!(
                "{}: tracking window shorter than peak window",
                self.episode_id
            )));
        }
        if self.min_users == 0 {
            return Err(Error::config(format!("{}: min_users must be >= 1", self.episode_id)));
        }
        Ok(())
    }

    pub fn peak_end(&self) -> i64 {
        self.event_start + i64::from(self.peak_duration) * 60
    }

    pub fn lookback_start(&self) -> i64 {
        self.event_start - i64::from(self.lookback) * 3600
    }

    pub fn tracking_end(&self) -> i64 {
        self.event_start + i64::from(self.tracking) * 3600
    }

    /// Number of whole minutes in the tracking window.
    pub fn tracking_minutes(&self) -> i64 {
        i64::from(self.tracking) * 60
    }

    /// Minute index relative to `event_start` (floor division).
    pub fn minute_of(&self, timestamp: i64) -> i64 {
        (timestamp - self.event_start).div_euclid(60)
    }

    pub fn tracked<'a>(&self, stream: &'a EventStream) -> &'a [TweetEvent] {
        stream.window(self.event_start, self.tracking_end())
    }
}

/// One detected hashtag with its tracked events.
#[derive(Debug, Clone, PartialEq)]
pub struct HashtagEpisode {
    pub tag: String,
    pub episode_id: String,
    /// Timestamp of the first tracked event.
    pub t0: i64,
    pub events: Vec<TweetEvent>,
}

/// Row of the detected-tags table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedTag {
    pub tag: String,
    pub episode_id: String,
    pub t0: i64,
    pub user_count: usize,
}

/// Stage-by-stage tag sets for one episode.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Detection {
    pub novel: BTreeSet<String>,
    pub pop: BTreeSet<String>,
    pub relevant: BTreeSet<String>,
    pub user_counts: BTreeMap<String, usize>,
}

/// Tags first seen in the peak window and absent from the lookback interval.
pub fn find_novel(stream: &EventStream, config: &EpisodeConfig) -> Result<BTreeSet<String>> {
    let needed = config.lookback_start();
    match stream.first_timestamp() {
        Some(first) if first <= needed => {}
        first => return Err(Error::Coverage { needed, first }),
    }
    let mut before: HashSet<&str> = HashSet::new();
    for e in stream.window(needed, config.event_start) {
        before.extend(e.hashtags.iter().map(String::as_str));
    }
    let mut novel = BTreeSet::new();
    for e in stream.window(config.event_start, config.peak_end()) {
        for t in &e.hashtags {
            if !before.contains(t.as_str()) {
                novel.insert(t.clone());
            }
        }
    }
    Ok(novel)
}

/// Distinct users per tag over the tracking window.
pub fn user_counts(
    stream: &EventStream,
    config: &EpisodeConfig,
    tags: &BTreeSet<String>,
) -> BTreeMap<String, usize> {
    let mut users: BTreeMap<&str, HashSet<&str>> = tags.iter().map(|t| (t.as_str(), HashSet::new())).collect();
    for e in config.tracked(stream) {
        for t in &e.hashtags {
            if let Some(set) = users.get_mut(t.as_str()) {
                set.insert(e.user_id.as_str());
            }
        }
    }
    users.into_iter().map(|(t, u)| (t.to_string(), u.len())).collect()
}

/// Keeps tags mentioned by at least `min_users` distinct users while tracked.
pub fn filter_pop(
    stream: &EventStream,
    config: &EpisodeConfig,
    novel: &BTreeSet<String>,
) -> BTreeSet<String> {
    user_counts(stream, config, novel)
        .into_iter()
        .filter(|&(_, n)| n >= config.min_users)
        .map(|(t, _)| t)
        .collect()
}

/// Keeps a tag when any tracked tweet carrying it mentions a keyword, or the tag itself does.
pub fn filter_relevant(
    stream: &EventStream,
    config: &EpisodeConfig,
    pop: &BTreeSet<String>,
    keywords: &[String],
) -> BTreeSet<String> {
    let keywords: Vec<String> = keywords
        .iter()
        .map(|k| k.trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .collect();
    if keywords.is_empty() {
        warn!("{}: empty keyword list, keeping all {} tags", config.episode_id, pop.len());
        return pop.clone();
    }
    let mut keep: BTreeSet<String> = pop
        .iter()
        .filter(|t| keywords.iter().any(|k| t.contains(k.as_str())))
        .cloned()
        .collect();
    for e in config.tracked(stream) {
        if e.hashtags.iter().all(|t| !pop.contains(t) || keep.contains(t)) {
            continue;
        }
        let text = e.text.to_lowercase();
        if keywords.iter().any(|k| text.contains(k.as_str())) {
            for t in &e.hashtags {
                if pop.contains(t) {
                    keep.insert(t.clone());
                }
            }
        }
    }
    keep
}

/// Runs all three filters for one episode.
pub fn detect(stream: &EventStream, config: &EpisodeConfig) -> Result<Detection> {
    config.validate()?;
    let novel = find_novel(stream, config)?;
    let counts = user_counts(stream, config, &novel);
    let pop: BTreeSet<String> = counts
        .iter()
        .filter(|&(_, &n)| n >= config.min_users)
        .map(|(t, _)| t.clone())
        .collect();
    let relevant = filter_relevant(stream, config, &pop, &config.keywords);
    Ok(Detection {
        novel,
        pop,
        relevant,
        user_counts: counts,
    })
}

/// Detects every episode; a tag novel in several episodes belongs to the earliest.
pub fn detect_all(stream: &EventStream, configs: &[EpisodeConfig]) -> Result<Vec<(EpisodeConfig, Detection)>> {
    let mut ordered: Vec<&EpisodeConfig> = configs.iter().collect();
    ordered.sort_by(|a, b| a.event_start.cmp(&b.event_start).then_with(|| a.episode_id.cmp(&b.episode_id)));
    let mut claimed: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::with_capacity(ordered.len());
    for cfg in ordered {
        let mut d = detect(stream, cfg)?;
        d.novel.retain(|t| !claimed.contains(t));
        d.pop.retain(|t| d.novel.contains(t));
        d.relevant.retain(|t| d.novel.contains(t));
        d.user_counts.retain(|t, _| d.novel.contains(t));
        claimed.extend(d.novel.iter().cloned());
        out.push((cfg.clone(), d));
    }
    Ok(out)
}

/// Collects a tag's tracked events.
pub fn build_episode(stream: &EventStream, config: &EpisodeConfig, tag: &str) -> Result<HashtagEpisode> {
    let events: Vec<TweetEvent> = config
        .tracked(stream)
        .iter()
        .filter(|e| e.has_tag(tag))
        .cloned()
        .collect();
    let t0 = events
        .first()
        .map(|e| e.timestamp)
        .ok_or_else(|| Error::data(format!("tag `{tag}` has no events in the tracking window of {}", config.episode_id)))?;
    if t0 >= config.peak_end() {
        return Err(Error::data(format!(
            "tag `{tag}` first appears after the peak window of {}",
            config.episode_id
        )));
    }
    Ok(HashtagEpisode {
        tag: tag.to_string(),
        episode_id: config.episode_id.clone(),
        t0,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const START: i64 = 1_000_000;

    fn cfg() -> EpisodeConfig {
        let mut c = EpisodeConfig::new("deb1", START);
        c.min_users = 100;
        c
    }

    fn ev(id: usize, ts: i64, user: &str, text: &str) -> TweetEvent {
        TweetEvent {
            event_id: format!("e{id:06}"),
            timestamp: ts,
            user_id: user.into(),
            follower_count: 1,
            text: text.into(),
            hashtags: crate::event::extract_hashtags(text),
            retweet_of: None,
            reply_to: None,
        }
    }

    fn anchor() -> TweetEvent {
        ev(999_999, START - 96 * 3600, "anchor", "warming up")
    }

    #[test]
    fn lookback_occurrence_excludes() {
        let s = EventStream::new(vec![
            anchor(),
            ev(1, START - 10 * 3600, "a", "#old"),
            ev(2, START + 60, "b", "#old #fresh"),
        ]);
        let novel = find_novel(&s, &cfg()).unwrap();
        assert_eq!(novel.into_iter().collect::<Vec<_>>(), vec!["fresh".to_string()]);
    }

    #[test]
    fn onset_after_peak_excluded() {
        let s = EventStream::new(vec![anchor(), ev(1, START + 125 * 60, "b", "#late")]);
        assert!(find_novel(&s, &cfg()).unwrap().is_empty());
    }

    #[test]
    fn coverage_error_when_lookback_missing() {
        let s = EventStream::new(vec![ev(1, START, "b", "#x")]);
        assert!(matches!(find_novel(&s, &cfg()), Err(Error::Coverage { .. })));
    }

    #[test]
    fn pop_boundaries() {
        let mut events = vec![anchor()];
        for i in 0..500 {
            events.push(ev(i, START + 60 + i as i64, &format!("u{}", i % 99), "#ninetynine"));
        }
        for i in 0..100 {
            events.push(ev(1000 + i, START + 60 + i as i64, &format!("u{i}"), "#hundred"));
        }
        let s = EventStream::new(events);
        let novel = find_novel(&s, &cfg()).unwrap();
        let pop = filter_pop(&s, &cfg(), &novel);
        assert_eq!(pop.into_iter().collect::<Vec<_>>(), vec!["hundred".to_string()]);
    }

    #[test]
    fn relevance_by_any_tweet() {
        let s = EventStream::new(vec![
            anchor(),
            ev(
                1,
                START + 60,
                "a",
                "This entire election is now about who will save Big Bird. #supportbigbird #debates",
            ),
            ev(2, START + 70, "b", "touchdown #nfl"),
        ]);
        let pop: BTreeSet<String> = ["supportbigbird", "nfl"].iter().map(|s| s.to_string()).collect();
        let kw = vec!["debate".to_string()];
        let rel = filter_relevant(&s, &cfg(), &pop, &kw);
        assert_eq!(rel.into_iter().collect::<Vec<_>>(), vec!["supportbigbird".to_string()]);
        // tag name itself may carry the keyword
        let pop2: BTreeSet<String> = ["debatefail".to_string()].into();
        assert_eq!(filter_relevant(&s, &cfg(), &pop2, &kw), pop2);
        // no keywords keeps everything
        assert_eq!(filter_relevant(&s, &cfg(), &pop, &[]), pop);
    }

    #[test]
    fn episode_window_and_onset() {
        let s = EventStream::new(vec![
            anchor(),
            ev(1, START + 3 * 60, "a", "#t"),
            ev(2, START + 9 * 60, "b", "#t"),
            ev(3, START + 10 * 60 + 30, "c", "#t"),
            ev(4, START + 78 * 3600, "d", "#t"),
        ]);
        let ep = build_episode(&s, &cfg(), "t").unwrap();
        assert_eq!(ep.t0, START + 180);
        assert_eq!(ep.events.len(), 3);
        assert_eq!(cfg().minute_of(ep.t0), 3);
        assert!(build_episode(&s, &cfg(), "missing").is_err());
    }

    #[test]
    fn earliest_episode_claims_tag() {
        let mut c2 = EpisodeConfig::new("deb2", START + 3600);
        c2.lookback = 1;
        let s = EventStream::new(vec![anchor(), ev(1, START + 90 * 60, "a", "#shared")]);
        let mut c1 = cfg();
        c1.min_users = 1;
        c2.min_users = 1;
        let res = detect_all(&s, &[c2, c1]).unwrap();
        assert_eq!(res[0].0.episode_id, "deb1");
        assert!(res[0].1.novel.contains("shared"));
        assert!(!res[1].1.novel.contains("shared"));
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        c.peak_duration = 0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.min_users = 0;
        assert!(c.validate().is_err());
        let c: EpisodeConfig = toml::from_str("episode_id = \"d\"\nevent_start = 5\n").unwrap();
        assert_eq!(c.tracking, 77);
        assert_eq!(c.keywords, default_keywords());
    }
}
