//! Whole-stream scenarios: planted hashtags over templated background chatter.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::episode::EpisodeConfig;
use crate::error::{Error, Result};
use crate::event::{EventStream, TweetEvent};
use crate::taxonomy::TrajectoryClass;

/// One additive piece of a tag's expected cumulative curve, in minutes since its onset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Component {
    /// Logistic growth normalized to start at zero at the onset.
    Logistic { size: f64, rate: f64, midpoint: f64 },
    /// Constant rate over `duration` minutes.
    Flat { size: f64, duration: f64 },
    /// Everything in the onset minute.
    Burst { size: f64 },
}

impl Component {
    /// Expected tweets in `[0, m)`.
    pub fn cumulative(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return 0.0;
        }
        match *self {
            Component::Logistic { size, rate, midpoint } => {
                let s = |t: f64| 1.0 / (1.0 + (-rate * (t - midpoint)).exp());
                size * (s(m) - s(0.0)) / (1.0 - s(0.0))
            }
            Component::Flat { size, duration } => size * (m / duration).min(1.0),
            Component::Burst { size } => size,
        }
    }

    pub fn size(&self) -> f64 {
        match *self {
            Component::Logistic { size, .. } | Component::Flat { size, .. } | Component::Burst { size } => size,
        }
    }

    fn valid(&self) -> bool {
        match *self {
            Component::Logistic { size, rate, midpoint } => size >= 0.0 && rate > 0.0 && midpoint.is_finite(),
            Component::Flat { size, duration } => size >= 0.0 && duration > 0.0,
            Component::Burst { size } => size >= 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Novelty {
    Novel,
    /// Also used a few times during the lookback interval.
    PreExisting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTag {
    pub tag: String,
    /// Index into the scenario's episodes.
    pub episode: usize,
    /// First use, minutes after the episode start.
    pub onset: u32,
    pub archetype: Vec<Component>,
    pub rt_fraction: f64,
    pub rp_fraction: f64,
    /// Distinct accounts posting the tag; tweets cycle through them.
    pub users: usize,
    pub novelty: Novelty,
    /// Tweets carry episode keywords.
    pub relevant: bool,
    pub label: Option<TrajectoryClass>,
}

impl PlantedTag {
    pub fn size(&self) -> f64 {
        self.archetype.iter().map(Component::size).sum()
    }

    fn cumulative(&self, m: f64) -> f64 {
        self.archetype.iter().map(|c| c.cumulative(m)).sum()
    }
}

/// Discrete Pareto follower counts: `floor(xmin * U^(-1/alpha))`, capped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerDist {
    pub xmin: f64,
    pub alpha: f64,
    pub cap: u64,
}

impl Default for FollowerDist {
    fn default() -> Self {
        Self {
            xmin: 50.0,
            alpha: 1.2,
            cap: 50_000_000,
        }
    }
}

impl FollowerDist {
    fn draw<R: Rng>(&self, rng: &mut R) -> u64 {
        let u: f64 = 1.0 - rng.random::<f64>();
        ((self.xmin * u.powf(-1.0 / self.alpha)).floor() as u64).min(self.cap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub episodes: Vec<EpisodeConfig>,
    pub tags: Vec<PlantedTag>,
    /// Background tweets per minute over each episode's lookback and tracking span.
    pub background_rate: f64,
    pub background_rt: f64,
    pub background_rp: f64,
    pub user_pool: usize,
    #[serde(default)]
    pub followers: FollowerDist,
    /// Poisson arrivals; off means rounded expected counts.
    #[serde(default = "yes")]
    pub noise: bool,
}

fn yes() -> bool {
    true
}

/// Truth about one planted tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagTruth {
    pub tag: String,
    pub episode_id: String,
    pub novel: bool,
    pub pop: bool,
    pub relevant: bool,
    pub label: Option<TrajectoryClass>,
    pub onset_minute: i64,
    /// Emitted tweets per tracked minute, from minute 0 of the episode.
    pub minute_counts: Vec<u64>,
    pub lookback_events: usize,
}

/// Retweets and replies per tracked minute over the whole stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteTotals {
    pub retweets: Vec<u64>,
    pub replies: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tags: Vec<TagTruth>,
    pub totals: BTreeMap<String, MinuteTotals>,
}

impl GroundTruth {
    fn select(&self, episode_id: &str, keep: impl Fn(&TagTruth) -> bool) -> BTreeSet<String> {
        self.tags
            .iter()
            .filter(|t| t.episode_id == episode_id && keep(t))
            .map(|t| t.tag.clone())
            .collect()
    }

    pub fn novel(&self, episode_id: &str) -> BTreeSet<String> {
        self.select(episode_id, |t| t.novel)
    }

    pub fn pop(&self, episode_id: &str) -> BTreeSet<String> {
        self.select(episode_id, |t| t.novel && t.pop)
    }

    pub fn relevant(&self, episode_id: &str) -> BTreeSet<String> {
        self.select(episode_id, |t| t.novel && t.pop && t.relevant)
    }

    pub fn label(&self, tag: &str) -> Option<TrajectoryClass> {
        self.tags.iter().find(|t| t.tag == tag).and_then(|t| t.label)
    }
}

const OLD_TAGS: [&str; 8] = ["news", "tcot", "p2", "music", "nfl", "gop", "sports", "tech"];
const RELEVANT_TEXT: [&str; 5] = [
    "Watching the debate tonight #{}",
    "Did the president really say that #{}",
    "Best line of the whole debate #{}",
    "#{} the president is on fire",
    "This debate is wild #{}",
];
const NEUTRAL_TEXT: [&str; 5] = [
    "Cannot stop laughing #{}",
    "Long day, finally home #{}",
    "#{} anyone else up",
    "Coffee first #{}",
    "Saw this and thought of you #{}",
];
const BACKGROUND_TEXT: [&str; 5] = [
    "Good morning everyone",
    "Heading to work now",
    "Dinner was great",
    "Who is watching the game",
    "Weekend plans anyone",
];
const BACKGROUND_KEYWORD_TEXT: [&str; 2] = ["Who won the debate", "What will the president do next"];

struct Draft {
    timestamp: i64,
    user: usize,
    text: String,
    tags: BTreeSet<String>,
    retweet_of: Option<usize>,
    reply_to: Option<usize>,
}

fn fill(template: &str, tag: &str) -> String {
    template.replace("{}", tag)
}

fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17))
}

impl ScenarioSpec {
    fn validate(&self) -> Result<()> {
        if self.episodes.is_empty() {
            return Err(Error::config("scenario needs at least one episode"));
        }
        for e in &self.episodes {
            e.validate()?;
        }
        let fractions = [self.background_rt, self.background_rp];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || self.background_rt + self.background_rp > 1.0 {
            return Err(Error::config("background fractions must lie in [0, 1] and sum to at most 1"));
        }
        if !(self.background_rate >= 0.0) {
            return Err(Error::config("background rate must be nonnegative"));
        }
        let mut names = BTreeSet::new();
        for t in &self.tags {
            let Some(ep) = self.episodes.get(t.episode) else {
                return Err(Error::config(format!("{}: episode index {} out of range", t.tag, t.episode)));
            };
            if !names.insert(t.tag.as_str()) || OLD_TAGS.contains(&t.tag.as_str()) {
                return Err(Error::config(format!("{}: duplicate tag name", t.tag)));
            }
            if t.tag.is_empty() || !t.tag.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') {
                return Err(Error::config(format!("{}: tags must be lowercase ASCII words", t.tag)));
            }
            if !(0.0..=1.0).contains(&t.rt_fraction) || !(0.0..=1.0).contains(&t.rp_fraction) || t.rt_fraction + t.rp_fraction > 1.0 {
                return Err(Error::config(format!("{}: retweet/reply fractions out of range", t.tag)));
            }
            if t.archetype.is_empty() || !t.archetype.iter().all(Component::valid) || t.size() < 1.0 {
                return Err(Error::config(format!("{}: archetype needs a total size of at least 1", t.tag)));
            }
            if t.users == 0 || t.users > self.user_pool {
                return Err(Error::config(format!(
                    "{}: {} users requested from a pool of {}",
                    t.tag, t.users, self.user_pool
                )));
            }
            if i64::from(t.onset) >= ep.tracking_minutes() {
                return Err(Error::config(format!("{}: onset after the tracking window", t.tag)));
            }
            if !t.relevant && ep.keywords.iter().any(|k| t.tag.contains(k.as_str())) {
                return Err(Error::config(format!("{}: irrelevant tag name contains a keyword", t.tag)));
            }
            // popularity must be realizable: enough accounts and enough tweets to reach them
            if t.users >= ep.min_users && t.size() < 2.0 * ep.min_users as f64 {
                return Err(Error::config(format!(
                    "{}: {} expected tweets cannot reliably reach {} users",
                    t.tag,
                    t.size(),
                    ep.min_users
                )));
            }
        }
        Ok(())
    }

    /// One episode with 23 novel tags (12 popular, 10 of them relevant) and 4 pre-existing decoys.
    pub fn debate(seed: u64) -> Self {
        let episode = EpisodeConfig::new("debate1", DEBATE_START);
        let mut tags = Vec::new();
        let winner = |size: f64| {
            vec![
                Component::Logistic {
                    size,
                    rate: 0.08,
                    midpoint: 30.0,
                },
                Component::Flat {
                    size: size / 4.0,
                    duration: 3600.0,
                },
            ]
        };
        let also_ran = |size: f64| {
            vec![
                Component::Logistic {
                    size,
                    rate: 0.1,
                    midpoint: 25.0,
                },
                Component::Flat {
                    size: 40.0,
                    duration: 240.0,
                },
            ]
        };
        let mut push = |name: &str, archetype: Vec<Component>, users: usize, novelty: Novelty, relevant: bool, label| {
            let i = tags.len() as u32;
            tags.push(PlantedTag {
                tag: name.to_string(),
                episode: 0,
                onset: (2 + 4 * i) % 115,
                archetype,
                rt_fraction: 0.35,
                rp_fraction: 0.15,
                users,
                novelty,
                relevant,
                label,
            });
        };
        for (i, name) in ["bindersfullofwomen", "bigbirdfired", "horsesandbayonets", "malarkeymeter"].iter().enumerate() {
            push(name, winner(5000.0 + 500.0 * i as f64), 1500, Novelty::Novel, true, Some(TrajectoryClass::Winner));
        }
        for (i, name) in ["zingerwatch", "moderatorfail", "factcheckthis", "openmicnight", "splitscreen", "closingargument"]
            .iter()
            .enumerate()
        {
            push(name, also_ran(600.0 + 50.0 * i as f64), 250, Novelty::Novel, true, Some(TrajectoryClass::AlsoRan));
        }
        for name in ["caturdaynight", "pumpkinspice"] {
            push(name, also_ran(500.0), 220, Novelty::Novel, false, None);
        }
        for i in 0..11 {
            let name = format!("sidebar{i:02}");
            let small = vec![Component::Burst { size: 20.0 }, Component::Flat { size: 60.0 + 10.0 * i as f64, duration: 300.0 }];
            push(&name, small, 40, Novelty::Novel, i % 2 == 0, None);
        }
        for name in ["election2012", "decision2012", "potuslive", "votingday"] {
            let arch = vec![Component::Logistic {
                size: 800.0,
                rate: 0.05,
                midpoint: 40.0,
            }];
            push(name, arch, 300, Novelty::PreExisting, true, None);
        }
        Self {
            seed,
            episodes: vec![episode],
            tags,
            background_rate: 7.0,
            background_rt: 0.3,
            background_rp: 0.15,
            user_pool: 20_000,
            followers: FollowerDist::default(),
            noise: true,
        }
    }

    /// Four episodes eight days apart, each with three winners and seven also-rans.
    pub fn standard(seed: u64) -> Self {
        const WORDS: [&str; 10] = [
            "bigbird", "binders", "bayonets", "malarkey", "zinger", "factcheck", "splitscreen", "openmic", "rebuttal", "crosstalk",
        ];
        let episodes: Vec<EpisodeConfig> = (0..4)
            .map(|e| EpisodeConfig::new(format!("debate{}", e + 1), DEBATE_START + e * 8 * 86_400))
            .collect();
        let mut tags = Vec::new();
        for e in 0..4usize {
            for (i, word) in WORDS.iter().enumerate() {
                let winner = i < 3;
                let scale = 1.0 + 0.15 * ((i + e) % 3) as f64;
                let archetype = if winner {
                    vec![
                        Component::Logistic {
                            size: 4000.0 * scale,
                            rate: 0.06,
                            midpoint: 40.0,
                        },
                        Component::Flat {
                            size: 2000.0 * scale,
                            duration: 4200.0,
                        },
                    ]
                } else {
                    vec![
                        Component::Logistic {
                            size: 500.0 * scale,
                            rate: 0.05 + 0.01 * (i % 4) as f64,
                            midpoint: 30.0,
                        },
                        Component::Burst { size: 20.0 },
                    ]
                };
                tags.push(PlantedTag {
                    tag: format!("{word}{}", e + 1),
                    episode: e,
                    onset: (3 + 11 * i as u32) % 115,
                    archetype,
                    rt_fraction: 0.35,
                    rp_fraction: 0.15,
                    users: if winner { 1500 } else { 250 },
                    novelty: Novelty::Novel,
                    relevant: true,
                    label: Some(if winner { TrajectoryClass::Winner } else { TrajectoryClass::AlsoRan }),
                });
            }
            tags.push(PlantedTag {
                tag: format!("sidebar{}", e + 1),
                episode: e,
                onset: 50,
                archetype: vec![Component::Flat { size: 80.0, duration: 200.0 }],
                rt_fraction: 0.2,
                rp_fraction: 0.1,
                users: 30,
                novelty: Novelty::Novel,
                relevant: true,
                label: None,
            });
            tags.push(PlantedTag {
                tag: format!("election2012x{}", e + 1),
                episode: e,
                onset: 5,
                archetype: vec![Component::Logistic {
                    size: 600.0,
                    rate: 0.05,
                    midpoint: 40.0,
                }],
                rt_fraction: 0.3,
                rp_fraction: 0.1,
                users: 300,
                novelty: Novelty::PreExisting,
                relevant: true,
                label: None,
            });
        }
        Self {
            seed,
            episodes,
            tags,
            background_rate: 3.0,
            background_rt: 0.3,
            background_rp: 0.15,
            user_pool: 20_000,
            followers: FollowerDist::default(),
            noise: true,
        }
    }
}

/// 2012-10-04 01:00 UTC.
pub const DEBATE_START: i64 = 1_349_312_400;

fn counts_for(tag: &PlantedTag, minutes: i64, noise: bool, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let span = (minutes - i64::from(tag.onset)).max(1) as usize;
    let mut out = Vec::with_capacity(span);
    for j in 0..span {
        let (a, b) = (tag.cumulative(j as f64), tag.cumulative(j as f64 + 1.0));
        let c = if noise {
            let mean = b - a;
            if mean > 0.0 {
                Poisson::new(mean).expect("positive mean").sample(rng) as u64
            } else {
                0
            }
        } else {
            (b.round() - a.round()).max(0.0) as u64
        };
        out.push(c);
    }
    // the onset minute always carries the first tweet
    out[0] = out[0].max(1);
    out
}

/// Emits the scenario's stream and the generator's own bookkeeping.
pub fn gen_debate_scenario(spec: &ScenarioSpec) -> Result<(EventStream, GroundTruth)> {
    spec.validate()?;
    let mut rng = sub_rng(spec.seed, 0);
    let followers: Vec<u64> = (0..spec.user_pool).map(|_| spec.followers.draw(&mut rng)).collect();
    let mut drafts: Vec<Draft> = Vec::new();

    for (e, ep) in spec.episodes.iter().enumerate() {
        let mut rng = sub_rng(spec.seed, 1000 + e as u64);
        let start = ep.lookback_start();
        let minutes = (ep.tracking_end() - start) / 60;
        drafts.push(Draft {
            timestamp: start,
            user: rng.random_range(0..spec.user_pool),
            text: BACKGROUND_TEXT[0].to_string(),
            tags: BTreeSet::new(),
            retweet_of: None,
            reply_to: None,
        });
        let mut earlier: Vec<usize> = vec![drafts.len() - 1];
        let mut earlier_originals: Vec<usize> = vec![drafts.len() - 1];
        let poisson = (spec.background_rate > 0.0).then(|| Poisson::new(spec.background_rate).expect("positive rate"));
        for m in 0..minutes {
            let n = match &poisson {
                Some(p) if spec.noise => p.sample(&mut rng) as usize,
                _ => spec.background_rate.round() as usize,
            };
            let first = drafts.len();
            for _ in 0..n {
                let ts = start + m * 60 + rng.random_range(0..60);
                let user = rng.random_range(0..spec.user_pool);
                let u: f64 = rng.random();
                if u < spec.background_rt && !earlier_originals.is_empty() {
                    let src = earlier_originals[rng.random_range(0..earlier_originals.len())];
                    let text = format!("RT @u{}: {}", drafts[src].user, drafts[src].text);
                    let tags = drafts[src].tags.clone();
                    drafts.push(Draft { timestamp: ts, user, text, tags, retweet_of: Some(src), reply_to: None });
                    continue;
                }
                let reply_to = (u < spec.background_rt + spec.background_rp && !earlier.is_empty())
                    .then(|| earlier[rng.random_range(0..earlier.len())]);
                let mut text = if rng.random::<f64>() < 0.2 {
                    BACKGROUND_KEYWORD_TEXT[rng.random_range(0..BACKGROUND_KEYWORD_TEXT.len())].to_string()
                } else {
                    BACKGROUND_TEXT[rng.random_range(0..BACKGROUND_TEXT.len())].to_string()
                };
                let mut tags = BTreeSet::new();
                if rng.random::<f64>() < 0.3 {
                    let t = OLD_TAGS[rng.random_range(0..OLD_TAGS.len())];
                    text.push_str(&format!(" #{t}"));
                    tags.insert(t.to_string());
                }
                if let Some(target) = reply_to {
                    text = format!("@u{} {text}", drafts[target].user);
                }
                drafts.push(Draft { timestamp: ts, user, text, tags, retweet_of: None, reply_to });
            }
            for i in first..drafts.len() {
                earlier.push(i);
                if drafts[i].retweet_of.is_none() && drafts[i].reply_to.is_none() {
                    earlier_originals.push(i);
                }
            }
        }
    }

    for (i, tag) in spec.tags.iter().enumerate() {
        let ep = &spec.episodes[tag.episode];
        let mut rng = sub_rng(spec.seed, 100_000 + i as u64);
        let pool: Vec<usize> = sample(&mut rng, spec.user_pool, tag.users).into_vec();
        let templates: &[&str] = if tag.relevant { &RELEVANT_TEXT } else { &NEUTRAL_TEXT };
        let tag_set: BTreeSet<String> = [tag.tag.clone()].into_iter().collect();
        let mut k = 0usize;
        if tag.novelty == Novelty::PreExisting {
            let lookback_minutes = (ep.event_start - ep.lookback_start()) / 60;
            for _ in 0..5 {
                let ts = ep.lookback_start() + rng.random_range(1..lookback_minutes) * 60 + rng.random_range(0..60);
                let text = fill(templates[rng.random_range(0..templates.len())], &tag.tag);
                drafts.push(Draft { timestamp: ts, user: pool[k % pool.len()], text, tags: tag_set.clone(), retweet_of: None, reply_to: None });
                k += 1;
            }
        }
        let counts = counts_for(tag, ep.tracking_minutes(), spec.noise, &mut rng);
        let mut earlier: Vec<usize> = Vec::new();
        let mut earlier_originals: Vec<usize> = Vec::new();
        for (j, &c) in counts.iter().enumerate() {
            let minute = i64::from(tag.onset) + j as i64;
            let first = drafts.len();
            for _ in 0..c {
                let ts = ep.event_start + minute * 60 + rng.random_range(0..60);
                let user = pool[k % pool.len()];
                k += 1;
                let u: f64 = rng.random();
                if u < tag.rt_fraction && !earlier_originals.is_empty() {
                    let src = earlier_originals[rng.random_range(0..earlier_originals.len())];
                    let text = format!("RT @u{}: {}", drafts[src].user, drafts[src].text);
                    drafts.push(Draft { timestamp: ts, user, text, tags: tag_set.clone(), retweet_of: Some(src), reply_to: None });
                    continue;
                }
                let reply_to = (u < tag.rt_fraction + tag.rp_fraction && !earlier.is_empty())
                    .then(|| earlier[rng.random_range(0..earlier.len())]);
                let mut text = fill(templates[rng.random_range(0..templates.len())], &tag.tag);
                if let Some(target) = reply_to {
                    text = format!("@u{} {text}", drafts[target].user);
                }
                drafts.push(Draft { timestamp: ts, user, text, tags: tag_set.clone(), retweet_of: None, reply_to });
            }
            for d in first..drafts.len() {
                earlier.push(d);
                if drafts[d].retweet_of.is_none() && drafts[d].reply_to.is_none() {
                    earlier_originals.push(d);
                }
            }
        }
    }

    let truth = bookkeeping(spec, &drafts);
    let mut order: Vec<usize> = (0..drafts.len()).collect();
    order.sort_by_key(|&i| (drafts[i].timestamp, i));
    let mut rank = vec![0usize; drafts.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let id = |i: usize| format!("tw{:09}", rank[i]);
    let events = order
        .iter()
        .map(|&i| {
            let d = &drafts[i];
            TweetEvent {
                event_id: id(i),
                timestamp: d.timestamp,
                user_id: format!("u{}", d.user),
                follower_count: followers[d.user],
                text: d.text.clone(),
                hashtags: d.tags.clone(),
                retweet_of: d.retweet_of.map(id),
                reply_to: d.reply_to.map(id),
            }
        })
        .collect();
    Ok((EventStream::new(events), truth))
}

fn bookkeeping(spec: &ScenarioSpec, drafts: &[Draft]) -> GroundTruth {
    let mut totals = BTreeMap::new();
    for ep in &spec.episodes {
        let len = ep.tracking_minutes() as usize;
        let mut t = MinuteTotals {
            retweets: vec![0; len],
            replies: vec![0; len],
        };
        for d in drafts {
            if d.timestamp >= ep.event_start && d.timestamp < ep.tracking_end() {
                let m = ep.minute_of(d.timestamp) as usize;
                if d.retweet_of.is_some() {
                    t.retweets[m] += 1;
                } else if d.reply_to.is_some() {
                    t.replies[m] += 1;
                }
            }
        }
        totals.insert(ep.episode_id.clone(), t);
    }
    let tags = spec
        .tags
        .iter()
        .map(|tag| {
            let ep = &spec.episodes[tag.episode];
            let mut minute_counts = vec![0u64; ep.tracking_minutes() as usize];
            let mut lookback_events = 0;
            for d in drafts.iter().filter(|d| d.tags.contains(&tag.tag)) {
                if d.timestamp >= ep.event_start && d.timestamp < ep.tracking_end() {
                    minute_counts[ep.minute_of(d.timestamp) as usize] += 1;
                } else if d.timestamp >= ep.lookback_start() && d.timestamp < ep.event_start {
                    lookback_events += 1;
                }
            }
            TagTruth {
                tag: tag.tag.clone(),
                episode_id: ep.episode_id.clone(),
                novel: tag.novelty == Novelty::Novel && i64::from(tag.onset) < i64::from(ep.peak_duration),
                pop: tag.users >= ep.min_users,
                relevant: tag.relevant,
                label: tag.label,
                onset_minute: i64::from(tag.onset),
                minute_counts,
                lookback_events,
            }
        })
        .collect();
    GroundTruth { tags, totals }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_reach_their_size() {
        for c in [
            Component::Logistic { size: 100.0, rate: 0.1, midpoint: 20.0 },
            Component::Flat { size: 50.0, duration: 10.0 },
            Component::Burst { size: 7.0 },
        ] {
            assert_eq!(c.cumulative(0.0), 0.0);
            assert!((c.cumulative(1e6) - c.size()).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_free_counts_follow_rounded_archetype() {
        let mut spec = ScenarioSpec::debate(1);
        spec.noise = false;
        let tag = &spec.tags[0];
        let mut rng = sub_rng(0, 0);
        let counts = counts_for(tag, 600, false, &mut rng);
        let mut acc = 0;
        for (j, c) in counts.iter().enumerate() {
            acc += c;
            assert_eq!(acc as f64, tag.cumulative(j as f64 + 1.0).round().max(1.0));
        }
    }

    #[test]
    fn infeasible_popularity_rejected() {
        let mut spec = ScenarioSpec::debate(1);
        spec.tags[0].users = spec.user_pool + 1;
        assert!(gen_debate_scenario(&spec).is_err());
    }
}
