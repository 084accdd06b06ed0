//! Brute-force reference implementations and random corpora shared by the
//! integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Map;

use sessionseq::dictionary::Dictionary;
use sessionseq::event_model::{ClientEvent, EventInitiator, EventName, EventPattern};
use sessionseq::sessionizer::{decode_sequence, SessionRecord};

pub const DAY: i64 = 1_325_376_000_000; // 2012-01-01T00:00:00Z

pub fn date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2012, 1, 1).unwrap()
}

pub const NAMES: [&str; 12] = [
    "web:home:mentions:stream:avatar:profile_click",
    "web:home:mentions:stream:avatar:click",
    "web:home:::tweet:impression",
    "web:home:::tweet:click",
    "web:profile:header::follow_button:follow",
    "iphone:profile:header:photo:avatar:profile_click",
    "iphone:home:::tweet:impression",
    "iphone:search:::result:click",
    "android:home:::tweet:impression",
    "android:search:::result:click",
    "android:profile:::tweet:expand",
    "m5:discover:::link:click",
];

pub const PATTERNS: [&str; 8] = [
    "*",
    "web:*",
    "*:profile_click",
    "web:home:mentions:*",
    "*:impression",
    "*:search:*",
    "iphone:*:click",
    "tv:*",
];

pub fn event(name: &str, user: Option<u64>, session: &str, ts: i64) -> ClientEvent {
    ClientEvent {
        event_initiator: EventInitiator::ClientUser,
        event_name: EventName::parse(name).unwrap(),
        user_id: user,
        session_id: session.to_owned(),
        ip: format!("10.0.0.{}", user.unwrap_or(0) % 250),
        timestamp: ts,
        event_details: Map::new(),
    }
}

/// Small corpus with heavy key collisions, duplicate timestamps and gaps at
/// and around the session boundary.
pub fn random_corpus(seed: u64, max_events: usize, gap_seconds: u64) -> Vec<ClientEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_events);
    let vocab = rng.gen_range(1..=NAMES.len());
    let gap_ms = gap_seconds as i64 * 1000;
    let mut clocks: BTreeMap<(Option<u64>, String), i64> = BTreeMap::new();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let user = if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(0..8)) };
        let session = format!("s{}", rng.gen_range(0..4));
        let clock = clocks
            .entry((user, session.clone()))
            .or_insert_with(|| rng.gen_range(0..3_600_000));
        *clock += match rng.gen_range(0..10) {
            0 => 0,
            1 => gap_ms,
            2 => gap_ms + 1,
            3 => gap_ms - 1,
            4 => gap_ms * 3,
            _ => rng.gen_range(1..60_000),
        };
        let name = NAMES[rng.gen_range(0..vocab)];
        out.push(event(name, user, &session, DAY + *clock));
    }
    // arrival order in a log file is unspecified
    out.shuffle(&mut rng);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BruteSession {
    pub user_id: Option<u64>,
    pub session_id: String,
    pub start_ts: i64,
    pub ip: String,
    pub names: Vec<EventName>,
    pub duration: u64,
}

/// Single pass over all events sorted by key and time.
pub fn brute_sessionize(events: &[ClientEvent], gap_seconds: u64) -> Vec<BruteSession> {
    let mut sorted: Vec<(usize, &ClientEvent)> = events.iter().enumerate().collect();
    sorted.sort_by(|(i, a), (j, b)| {
        (a.user_id, &a.session_id, a.timestamp, &a.event_name, i).cmp(&(b.user_id, &b.session_id, b.timestamp, &b.event_name, j))
    });
    let mut out: Vec<BruteSession> = Vec::new();
    let mut last: Option<&ClientEvent> = None;
    for (_, e) in sorted {
        let same = last.is_some_and(|p| {
            p.user_id == e.user_id && p.session_id == e.session_id && e.timestamp - p.timestamp <= gap_seconds as i64 * 1000
        });
        if same {
            let s = out.last_mut().unwrap();
            s.names.push(e.event_name.clone());
            s.duration = ((e.timestamp - s.start_ts) / 1000) as u64;
        } else {
            out.push(BruteSession {
                user_id: e.user_id,
                session_id: e.session_id.clone(),
                start_ts: e.timestamp,
                ip: e.ip.clone(),
                names: vec![e.event_name.clone()],
                duration: 0,
            });
        }
        last = Some(e);
    }
    out.sort();
    out
}

pub fn decode_records(dict: &Dictionary, records: &[SessionRecord]) -> Vec<BruteSession> {
    records
        .iter()
        .map(|r| BruteSession {
            user_id: r.user_id,
            session_id: r.session_id.clone(),
            start_ts: r.start_ts,
            ip: r.ip.clone(),
            names: decode_sequence(dict, &r.session_sequence).unwrap(),
            duration: r.duration,
        })
        .collect()
}

pub fn brute_count(sessions: &[Vec<EventName>], p: &EventPattern) -> (u64, u64) {
    let per: Vec<u64> = sessions
        .iter()
        .map(|s| s.iter().filter(|n| p.matches(n)).count() as u64)
        .collect();
    (per.iter().sum(), per.iter().filter(|&&c| c > 0).count() as u64)
}

/// Stages completed in order, gaps allowed; greedy earliest matching is optimal.
pub fn in_order_depth(names: &[EventName], stages: &[EventPattern]) -> usize {
    let mut k = 0;
    for n in names {
        if k < stages.len() && stages[k].matches(n) {
            k += 1;
        }
    }
    k
}

/// Longest run of stages matched by adjacent events starting anywhere.
pub fn contiguous_depth(names: &[EventName], stages: &[EventPattern]) -> usize {
    (0..names.len())
        .map(|i| {
            names[i..]
                .iter()
                .zip(stages)
                .take_while(|(n, s)| s.matches(n))
                .count()
        })
        .max()
        .unwrap_or(0)
}

pub fn brute_funnel(sessions: &[Vec<EventName>], stages: &[EventPattern], contiguous: bool) -> Vec<u64> {
    let mut counts = vec![0u64; stages.len()];
    for s in sessions {
        let d = if contiguous {
            contiguous_depth(s, stages)
        } else {
            in_order_depth(s, stages)
        };
        for c in &mut counts[..d] {
            *c += 1;
        }
    }
    counts
}
