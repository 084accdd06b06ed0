//! Seeded synthetic client event corpora.
//!
//! Event types are drawn from a Zipf distribution over a fixed catalog of
//! names, session lengths are geometric, and everything is a function of
//! the seed.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, Zipf};
use serde_json::{json, Map};

use crate::event_model::{ClientEvent, EventInitiator, EventName};

const CLIENTS: [&str; 5] = ["web", "iphone", "android", "ipad", "m5"];
const PAGES: [&str; 7] = ["home", "profile", "search", "discover", "connect", "settings", "messages"];
const SECTIONS: [&str; 5] = ["", "mentions", "stream", "header", "sidebar"];
const COMPONENTS: [&str; 5] = ["", "stream", "photo", "tweet", "follow_button"];
const ELEMENTS: [&str; 5] = ["avatar", "tweet", "link", "button", "result"];
const ACTIONS: [&str; 6] = ["click", "impression", "profile_click", "follow", "expand", "hover"];

const NAME_SPACE: usize = CLIENTS.len() * PAGES.len() * SECTIONS.len() * COMPONENTS.len() * ELEMENTS.len() * ACTIONS.len();

const DAY_MS: i64 = 86_400_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GenOptions {
    pub event_types: usize,
    pub zipf_exponent: f64,
    pub sessions: usize,
    pub mean_session_length: f64,
    /// Stop once this many events exist, truncating the last session.
    pub total_events: Option<u64>,
    /// Distinct logged-in users sessions are spread over.
    pub users: usize,
    pub logged_out_fraction: f64,
    /// Mean seconds between consecutive events of a session.
    pub mean_gap_seconds: f64,
    pub date: NaiveDate,
    pub seed: u64,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            event_types: 50,
            zipf_exponent: 1.2,
            sessions: 1000,
            mean_session_length: 20.0,
            total_events: None,
            users: 300,
            logged_out_fraction: 0.1,
            mean_gap_seconds: 15.0,
            date: NaiveDate::from_ymd_opt(2012, 1, 1).expect("valid date"),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenError {
    #[error("invalid generator option: {0}")]
    InvalidOption(&'static str),
}

/// The `i`th name of the synthetic catalog; distinct for distinct `i`.
pub fn synthetic_name(i: usize) -> EventName {
    let mut rest = i % NAME_SPACE;
    let mut pick = |len: usize| {
        let v = rest % len;
        rest /= len;
        v
    };
    let action = ACTIONS[pick(ACTIONS.len())];
    let element = ELEMENTS[pick(ELEMENTS.len())];
    let client = CLIENTS[pick(CLIENTS.len())];
    let page = PAGES[pick(PAGES.len())];
    let section = SECTIONS[pick(SECTIONS.len())];
    let component = COMPONENTS[pick(COMPONENTS.len())];
    let element = match i / NAME_SPACE {
        0 => element.to_owned(),
        lap => format!("{element}_{lap}"),
    };
    EventName::from_components([client, page, section, component, &element, action])
        .expect("synthetic components are valid")
}

fn validate(opts: &GenOptions) -> Result<(), GenError> {
    if opts.event_types == 0 {
        return Err(GenError::InvalidOption("event_types must be positive"));
    }
    if !(opts.zipf_exponent >= 0.0 && opts.zipf_exponent.is_finite()) {
        return Err(GenError::InvalidOption("zipf_exponent must be a non-negative number"));
    }
    if !(opts.mean_session_length >= 1.0 && opts.mean_session_length.is_finite()) {
        return Err(GenError::InvalidOption("mean_session_length must be at least 1"));
    }
    if !(0.0..=1.0).contains(&opts.logged_out_fraction) {
        return Err(GenError::InvalidOption("logged_out_fraction must be in [0, 1]"));
    }
    if !(opts.mean_gap_seconds > 0.0 && opts.mean_gap_seconds.is_finite()) {
        return Err(GenError::InvalidOption("mean_gap_seconds must be positive"));
    }
    if opts.users == 0 && opts.logged_out_fraction < 1.0 {
        return Err(GenError::InvalidOption("users must be positive unless all traffic is logged out"));
    }
    Ok(())
}

/// Generates a corpus ordered by timestamp, all within `opts.date` (UTC).
pub fn generate(opts: &GenOptions) -> Result<Vec<ClientEvent>, GenError> {
    validate(opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let names: Vec<EventName> = (0..opts.event_types).map(synthetic_name).collect();
    let zipf = Zipf::new(opts.event_types as u64, opts.zipf_exponent)
        .map_err(|_| GenError::InvalidOption("zipf parameters"))?;
    // geometric counts failures, so 1 + Geometric(1/m) has mean m
    let length = Geometric::new(1.0 / opts.mean_session_length)
        .map_err(|_| GenError::InvalidOption("mean_session_length"))?;
    let gap = Exp::new(1.0 / (opts.mean_gap_seconds * 1000.0)).map_err(|_| GenError::InvalidOption("mean_gap_seconds"))?;
    let day_start = opts
        .date
        .and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        .timestamp_millis();

    let budget = opts.total_events.unwrap_or(u64::MAX);
    let mut events = Vec::new();
    let mut s = 0usize;
    while s < opts.sessions && (events.len() as u64) < budget {
        let logged_out = rng.gen_bool(opts.logged_out_fraction);
        let user_id = if logged_out { None } else { Some(rng.gen_range(0..opts.users as u64)) };
        let session_id = format!("{:016x}", rng.gen::<u64>());
        let ip = match user_id {
            Some(u) => format!("10.{}.{}.{}", (u >> 16) & 0xff, (u >> 8) & 0xff, u & 0xff),
            None => format!("192.168.{}.{}", rng.gen_range(0..256), rng.gen_range(1..255)),
        };
        let len = 1 + length.sample(&mut rng);
        let mut t = rng.gen_range(0..DAY_MS);
        for _ in 0..len {
            if events.len() as u64 >= budget {
                break;
            }
            let rank = zipf.sample(&mut rng) as usize - 1;
            let name = names[rank].clone();
            let initiator = if name.action() == "impression" {
                EventInitiator::ClientApp
            } else {
                EventInitiator::ClientUser
            };
            let mut details = Map::new();
            if rng.gen_bool(0.3) {
                details.insert("item_id".into(), json!(rng.gen_range(0..1_000_000u32)));
            }
            events.push(ClientEvent {
                event_initiator: initiator,
                event_name: name,
                user_id,
                session_id: session_id.clone(),
                ip: ip.clone(),
                timestamp: day_start + t,
                event_details: details,
            });
            t = (t + gap.sample(&mut rng) as i64).min(DAY_MS - 1);
        }
        s += 1;
    }
    events.sort_by_key(|e| e.timestamp);
    Ok(events)
}
