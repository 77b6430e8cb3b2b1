//! Tweet events: parsing, validation and hashtag normalization.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// One timestamped message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetEvent {
    pub event_id: String,
    /// Seconds since the Unix epoch (UTC).
    pub timestamp: i64,
    pub user_id: String,
    pub follower_count: u64,
    pub text: String,
    /// Normalized labels: lowercase, without the leading `#`.
    pub hashtags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retweet_of: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_to: Option<String>,
}

impl TweetEvent {
    pub fn is_retweet(&self) -> bool {
        self.retweet_of.is_some()
    }

    /// Replies exclude retweets: when both links are present the retweet wins.
    pub fn is_reply(&self) -> bool {
        self.reply_to.is_some() && self.retweet_of.is_none()
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.hashtags.contains(tag)
    }
}

/// Events ordered by `(timestamp, event_id)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventStream {
    events: Vec<TweetEvent>,
}

impl EventStream {
    pub fn new(mut events: Vec<TweetEvent>) -> Self {
        events.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.event_id.cmp(&b.event_id))
        });
        Self { events }
    }

    pub fn events(&self) -> &[TweetEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_timestamp(&self) -> Option<i64> {
        self.events.first().map(|e| e.timestamp)
    }

    pub fn last_timestamp(&self) -> Option<i64> {
        self.events.last().map(|e| e.timestamp)
    }

    /// Index range of events with `from <= timestamp < to`.
    pub fn range(&self, from: i64, to: i64) -> std::ops::Range<usize> {
        let lo = self.events.partition_point(|e| e.timestamp < from);
        let hi = self.events.partition_point(|e| e.timestamp < to);
        lo..hi.max(lo)
    }

    pub fn window(&self, from: i64, to: i64) -> &[TweetEvent] {
        &self.events[self.range(from, to)]
    }

    pub fn into_events(self) -> Vec<TweetEvent> {
        self.events
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StreamStats {
    pub event_count: usize,
    pub unique_users: usize,
    pub time_span: Option<(i64, i64)>,
    pub retweet_count: usize,
    pub reply_count: usize,
}

impl fmt::Display for StreamStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "events:       {}", self.event_count)?;
        writeln!(f, "unique users: {}", self.unique_users)?;
        match self.time_span {
            Some((lo, hi)) => writeln!(f, "time span:    {lo} .. {hi}")?,
            None => writeln!(f, "time span:    (empty)")?,
        }
        writeln!(f, "retweets:     {}", self.retweet_count)?;
        write!(f, "replies:      {}", self.reply_count)
    }
}

/// Supported external record formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guesses the format from a file extension; anything but `.csv` is JSON lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::config(format!("unknown event format `{other}`"))),
        }
    }
}

/// Every `#` + `[A-Za-z0-9_]+` token in `text`, lowercased and without the `#`.
pub fn extract_hashtags(text: &str) -> BTreeSet<String> {
    let bytes = text.as_bytes();
    let mut tags = BTreeSet::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'#' {
            let start = i + 1;
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            if end > start {
                tags.insert(text[start..end].to_ascii_lowercase());
            }
            i = end.max(i + 1);
        } else {
            i += 1;
        }
    }
    tags
}

fn normalize_tag(raw: &str) -> Option<String> {
    let t = raw.trim().trim_start_matches('#').to_lowercase();
    (!t.is_empty()).then_some(t)
}

pub fn parse_timestamp(raw: &str) -> std::result::Result<i64, String> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Ok(secs);
    }
    chrono::DateTime::parse_from_rfc3339(raw)
        .map(|dt| dt.timestamp())
        .map_err(|e| format!("`{raw}` is neither epoch seconds nor RFC 3339 ({e})"))
}

/// Parses a record sequence into a sorted stream.
pub fn parse_events<R: BufRead>(reader: R, format: Format) -> Result<EventStream> {
    let events = match format {
        Format::Jsonl => parse_jsonl(reader)?,
        Format::Csv => parse_csv(reader)?,
    };
    Ok(EventStream::new(events))
}

pub fn read_events_file(path: &Path) -> Result<EventStream> {
    let file = std::fs::File::open(path)?;
    parse_events(std::io::BufReader::new(file), Format::from_path(path))
}

struct RawFields {
    line: usize,
    event_id: String,
    timestamp: i64,
    user_id: String,
    follower_count: i64,
    text: String,
    hashtags: Option<Vec<String>>,
    retweet_of: Option<String>,
    reply_to: Option<String>,
}

fn field_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Field {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn build_event(raw: RawFields) -> Result<TweetEvent> {
    let line = raw.line;
    if raw.event_id.is_empty() {
        return Err(field_err(line, "event_id", "must be nonempty"));
    }
    if raw.follower_count < 0 {
        return Err(field_err(
            line,
            "follower_count",
            format!("must be non-negative, got {}", raw.follower_count),
        ));
    }
    let hashtags = match raw.hashtags {
        Some(list) => {
            let mut set = BTreeSet::new();
            for t in list {
                match normalize_tag(&t) {
                    Some(tag) => {
                        set.insert(tag);
                    }
                    None => return Err(field_err(line, "hashtags", "empty hashtag label")),
                }
            }
            set
        }
        None => extract_hashtags(&raw.text),
    };
    for (field, target) in [("retweet_of", &raw.retweet_of), ("reply_to", &raw.reply_to)] {
        if target.as_deref() == Some(raw.event_id.as_str()) {
            return Err(field_err(line, field, "event references itself"));
        }
    }
    // a record flagged as both keeps only the retweet link
    let reply_to = if raw.retweet_of.is_some() { None } else { raw.reply_to };
    Ok(TweetEvent {
        event_id: raw.event_id,
        timestamp: raw.timestamp,
        user_id: raw.user_id,
        follower_count: raw.follower_count as u64,
        text: raw.text,
        hashtags,
        retweet_of: raw.retweet_of,
        reply_to,
    })
}

fn json_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_jsonl<R: BufRead>(reader: R) -> Result<Vec<TweetEvent>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: line_no,
            message: format!("invalid JSON: {e}"),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Record {
            line: line_no,
            message: "record is not a JSON object".into(),
        })?;
        let required = |name: &str| {
            obj.get(name)
                .filter(|v| !v.is_null())
                .ok_or_else(|| field_err(line_no, name, "missing"))
        };
        let id_field = |name: &str| -> Result<String> {
            json_id(required(name)?).ok_or_else(|| field_err(line_no, name, "expected string or integer"))
        };
        let optional_id = |name: &str| -> Result<Option<String>> {
            match obj.get(name) {
                None | Some(Value::Null) => Ok(None),
                Some(v) => json_id(v)
                    .map(Some)
                    .ok_or_else(|| field_err(line_no, name, "expected string or integer")),
            }
        };
        let timestamp = match required("timestamp")? {
            Value::Number(n) => n
                .as_i64()
                .ok_or_else(|| field_err(line_no, "timestamp", "expected integer epoch seconds"))?,
            Value::String(s) => parse_timestamp(s).map_err(|m| field_err(line_no, "timestamp", m))?,
            _ => return Err(field_err(line_no, "timestamp", "expected integer or RFC 3339 string")),
        };
        let follower_count = required("follower_count")?
            .as_i64()
            .ok_or_else(|| field_err(line_no, "follower_count", "expected integer"))?;
        let text = required("text")?
            .as_str()
            .ok_or_else(|| field_err(line_no, "text", "expected string"))?
            .to_string();
        let hashtags = match obj.get("hashtags") {
            None | Some(Value::Null) => None,
            Some(Value::Array(items)) => Some(
                items
                    .iter()
                    .map(|v| {
                        v.as_str()
                            .map(str::to_string)
                            .ok_or_else(|| field_err(line_no, "hashtags", "expected array of strings"))
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            Some(_) => return Err(field_err(line_no, "hashtags", "expected array of strings")),
        };
        out.push(build_event(RawFields {
            line: line_no,
            event_id: id_field("event_id")?,
            timestamp,
            user_id: id_field("user_id")?,
            follower_count,
            text,
            hashtags,
            retweet_of: optional_id("retweet_of")?,
            reply_to: optional_id("reply_to")?,
        })?);
    }
    Ok(out)
}

fn parse_csv<R: BufRead>(reader: R) -> Result<Vec<TweetEvent>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    for name in ["event_id", "timestamp", "user_id", "follower_count", "text"] {
        if !col.contains_key(name) {
            return Err(field_err(1, name, "missing column in header"));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line_no = rec.position().map_or(0, |p| p.line() as usize);
        let get = |name: &str| -> Option<&str> { col.get(name).and_then(|&i| rec.get(i)) };
        let nonempty = |name: &str| get(name).map(str::trim).filter(|s| !s.is_empty());
        let required = |name: &str| nonempty(name).ok_or_else(|| field_err(line_no, name, "missing"));
        let timestamp =
            parse_timestamp(required("timestamp")?).map_err(|m| field_err(line_no, "timestamp", m))?;
        let follower_count = required("follower_count")?
            .parse::<i64>()
            .map_err(|e| field_err(line_no, "follower_count", e.to_string()))?;
        let hashtags = nonempty("hashtags").map(|s| s.split(';').map(str::to_string).collect());
        out.push(build_event(RawFields {
            line: line_no,
            event_id: required("event_id")?.to_string(),
            timestamp,
            user_id: required("user_id")?.to_string(),
            follower_count,
            text: get("text").unwrap_or("").to_string(),
            hashtags,
            retweet_of: nonempty("retweet_of").map(str::to_string),
            reply_to: nonempty("reply_to").map(str::to_string),
        })?);
    }
    Ok(out)
}

/// Writes one JSON object per line, timestamps as epoch seconds.
pub fn write_jsonl<W: Write>(stream: &EventStream, mut out: W) -> Result<()> {
    for e in stream.events() {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes CSV with a header row; hashtags are `;`-joined.
///
/// An empty hashtag cell reads back as "derive from text", so events whose
/// hashtag set is empty but whose text carries `#tokens` do not round-trip.
pub fn write_csv<W: Write>(stream: &EventStream, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "event_id",
        "timestamp",
        "user_id",
        "follower_count",
        "text",
        "hashtags",
        "retweet_of",
        "reply_to",
    ])?;
    for e in stream.events() {
        let tags = e.hashtags.iter().cloned().collect::<Vec<_>>().join(";");
        w.write_record([
            e.event_id.as_str(),
            &e.timestamp.to_string(),
            &e.user_id,
            &e.follower_count.to_string(),
            &e.text,
            &tags,
            e.retweet_of.as_deref().unwrap_or(""),
            e.reply_to.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Checks id uniqueness and reference sanity, returning summary counts.
pub fn validate_stream(stream: &EventStream) -> Result<StreamStats> {
    let mut seen: HashMap<&str, i64> = HashMap::with_capacity(stream.len());
    let mut users: HashSet<&str> = HashSet::new();
    let mut stats = StreamStats {
        event_count: stream.len(),
        time_span: stream.first_timestamp().zip(stream.last_timestamp()),
        ..StreamStats::default()
    };
    for e in stream.events() {
        if seen.insert(e.event_id.as_str(), e.timestamp).is_some() {
            return Err(Error::DuplicateId(e.event_id.clone()));
        }
        users.insert(e.user_id.as_str());
    }
    for e in stream.events() {
        for target in [&e.retweet_of, &e.reply_to].into_iter().flatten() {
            if target == &e.event_id {
                return Err(Error::InvalidReference {
                    id: e.event_id.clone(),
                    target: target.clone(),
                    reason: "self-reference".into(),
                });
            }
        }
        if let Some(orig) = &e.retweet_of {
            if let Some(&ts) = seen.get(orig.as_str()) {
                if ts > e.timestamp {
                    return Err(Error::InvalidReference {
                        id: e.event_id.clone(),
                        target: orig.clone(),
                        reason: "retweet precedes its original".into(),
                    });
                }
            }
        }
        if e.is_retweet() {
            stats.retweet_count += 1;
        } else if e.is_reply() {
            stats.reply_count += 1;
        }
    }
    stats.unique_users = users.len();
    Ok(stats)
}
