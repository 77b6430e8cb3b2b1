use std::collections::BTreeSet;
use std::io::Cursor;

use proptest::prelude::*;

use hashtag_lifecycle::event::{extract_hashtags, parse_events, validate_stream, write_csv, write_jsonl, EventStream, Format, TweetEvent};

fn event(id: usize, ts: i64, text: &str) -> TweetEvent {
    TweetEvent {
        event_id: format!("e{id}"),
        timestamp: ts,
        user_id: format!("u{}", id % 7),
        follower_count: (id * 37) as u64,
        text: text.to_string(),
        hashtags: extract_hashtags(text),
        retweet_of: (id % 3 == 2).then(|| format!("e{}", id - 1)),
        reply_to: (id % 5 == 4 && id % 3 != 2).then(|| format!("u{}", (id + 1) % 7)),
    }
}

fn sample() -> EventStream {
    let texts = ["Cut PBS? #SaveBigBird", "plain, with \"quotes\"", "#a #B\nnewline", "", "#debate now"];
    EventStream::new((0..40).map(|i| event(i, 1_000 + (i as i64 / 3) * 30, texts[i % texts.len()])).collect())
}

#[test]
fn jsonl_round_trip() {
    let s = sample();
    let mut buf = Vec::new();
    write_jsonl(&s, &mut buf).unwrap();
    let back = parse_events(Cursor::new(buf), Format::Jsonl).unwrap();
    assert_eq!(back, s);
}

#[test]
fn csv_round_trip() {
    let s = sample();
    let mut buf = Vec::new();
    write_csv(&s, &mut buf).unwrap();
    let back = parse_events(Cursor::new(buf), Format::Csv).unwrap();
    assert_eq!(back, s);
}

#[test]
fn stats_count_kinds() {
    let stats = validate_stream(&sample()).unwrap();
    assert_eq!(stats.event_count, 40);
    assert_eq!(stats.unique_users, 7);
    assert_eq!(stats.retweet_count, 13);
    assert!(stats.event_count >= stats.unique_users);
}

#[test]
fn paper_example_tag() {
    assert_eq!(
        extract_hashtags("Cut PBS? Noooooooooooi #SaveBigBird"),
        BTreeSet::from(["savebigbird".to_string()])
    );
}

proptest! {
    #[test]
    fn extraction_is_idempotent(text in "[ a-zA-Z0-9_#!?.]{0,80}") {
        let tags = extract_hashtags(&text);
        let rejoined: Vec<String> = tags.iter().map(|t| format!("#{t}")).collect();
        prop_assert_eq!(extract_hashtags(&rejoined.join(" ")), tags.clone());
        for t in &tags {
            prop_assert!(!t.is_empty());
            prop_assert_eq!(t.to_lowercase(), t.clone());
            prop_assert!(t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
        }
    }

    #[test]
    fn stream_order_is_canonical(ts in proptest::collection::vec(0i64..50, 1..40)) {
        let events: Vec<TweetEvent> = ts.iter().enumerate().map(|(i, &t)| event(i, t, "x")).collect();
        let mut rev = events.clone();
        rev.reverse();
        let a = EventStream::new(events);
        prop_assert_eq!(&a, &EventStream::new(rev));
        prop_assert!(a.events().windows(2).all(|w| (w[0].timestamp, &w[0].event_id) <= (w[1].timestamp, &w[1].event_id)));
    }
}
