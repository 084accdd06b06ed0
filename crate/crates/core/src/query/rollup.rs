use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::event_model::{ClientEvent, EventName};

/// Which components each roll-up level keeps (`false` = wildcarded).
///
/// Levels 0..=4 progressively wildcard element, component, section and page.
/// Level 5 is the per-(client, action) total; its keys coincide with level 4.
pub const ROLLUP_LEVELS: [[bool; 6]; 6] = [
    [true, true, true, true, true, true],
    [true, true, true, true, false, true],
    [true, true, true, false, false, true],
    [true, true, false, false, false, true],
    [true, false, false, false, false, true],
    [true, false, false, false, false, true],
];

/// A roll-up row key; `None` components are wildcards.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RollupKey(pub [Option<String>; 6]);

impl RollupKey {
    pub fn for_name(name: &EventName, level: usize) -> Self {
        let parts = name.components();
        RollupKey(std::array::from_fn(|i| {
            ROLLUP_LEVELS[level][i].then(|| parts[i].to_owned())
        }))
    }

    /// Wildcards this key further, to the shape of `level`.
    pub fn coarsen(&self, level: usize) -> Self {
        RollupKey(std::array::from_fn(|i| {
            if ROLLUP_LEVELS[level][i] {
                self.0[i].clone()
            } else {
                None
            }
        }))
    }

    /// Components as text, `*` for wildcards.
    pub fn fields(&self) -> [&str; 6] {
        std::array::from_fn(|i| self.0[i].as_deref().unwrap_or("*"))
    }
}

impl fmt::Display for RollupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.fields().join(", "))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RollupRow {
    pub logged_in: u64,
    pub logged_out: u64,
}

impl RollupRow {
    pub fn count(&self) -> u64 {
        self.logged_in + self.logged_out
    }

    fn add(&mut self, other: RollupRow) {
        self.logged_in += other.logged_in;
        self.logged_out += other.logged_out;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RollupTable {
    pub level: usize,
    pub rows: BTreeMap<RollupKey, RollupRow>,
}

impl RollupTable {
    pub fn total(&self) -> u64 {
        self.rows.values().map(RollupRow::count).sum()
    }
}

/// Event counts at each of the six namespace levels, split by logged-in status.
pub fn rollup(events: &[ClientEvent]) -> Vec<RollupTable> {
    let by_name: BTreeMap<&EventName, RollupRow> = events
        .par_chunks(8192)
        .fold(BTreeMap::new, |mut acc: BTreeMap<&EventName, RollupRow>, chunk| {
            for e in chunk {
                let row = acc.entry(&e.event_name).or_default();
                if e.is_logged_in() {
                    row.logged_in += 1;
                } else {
                    row.logged_out += 1;
                }
            }
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                a.entry(k).or_default().add(v);
            }
            a
        });

    (0..ROLLUP_LEVELS.len())
        .map(|level| {
            let mut rows: BTreeMap<RollupKey, RollupRow> = BTreeMap::new();
            for (name, row) in &by_name {
                rows.entry(RollupKey::for_name(name, level)).or_default().add(*row);
            }
            RollupTable { level, rows }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::EventInitiator;
    use serde_json::Map;

    fn ev(name: &str, user: Option<u64>) -> ClientEvent {
        ClientEvent {
            event_initiator: EventInitiator::ClientUser,
            event_name: EventName::parse(name).unwrap(),
            user_id: user,
            session_id: "s".into(),
            ip: "10.0.0.1".into(),
            timestamp: 1,
            event_details: Map::new(),
        }
    }

    #[test]
    fn single_event_in_every_level() {
        let tables = rollup(&[ev("web:home:mentions:stream:avatar:profile_click", Some(1))]);
        assert_eq!(tables.len(), 6);
        for t in &tables {
            assert_eq!(t.rows.len(), 1);
            let (key, row) = t.rows.iter().next().unwrap();
            assert_eq!(key.fields()[5], "profile_click");
            assert_eq!(*row, RollupRow { logged_in: 1, logged_out: 0 });
        }
        let keys: Vec<String> = tables.iter().map(|t| t.rows.keys().next().unwrap().to_string()).collect();
        assert_eq!(keys[0], "(web, home, mentions, stream, avatar, profile_click)");
        assert_eq!(keys[1], "(web, home, mentions, stream, *, profile_click)");
        assert_eq!(keys[4], "(web, *, *, *, *, profile_click)");
        assert_eq!(keys[5], "(web, *, *, *, *, profile_click)");
        assert!(keys.iter().all(|k| k.starts_with("(web, ")));
    }

    #[test]
    fn element_collapses_at_level_one() {
        let tables = rollup(&[
            ev("web:home:mentions:stream:avatar:click", Some(1)),
            ev("web:home:mentions:stream:name:click", None),
        ]);
        assert_eq!(tables[0].rows.len(), 2);
        assert_eq!(tables[1].rows.len(), 1);
        let row = tables[1].rows.values().next().unwrap();
        assert_eq!((row.count(), row.logged_in, row.logged_out), (2, 1, 1));
    }

    #[test]
    fn coarsening_matches_direct_keys() {
        let name = EventName::parse("iphone:profile:header:photo:avatar:profile_click").unwrap();
        let fine = RollupKey::for_name(&name, 0);
        for level in 0..6 {
            assert_eq!(fine.coarsen(level), RollupKey::for_name(&name, level));
        }
    }

    #[test]
    fn empty_input() {
        let tables = rollup(&[]);
        assert!(tables.iter().all(|t| t.rows.is_empty() && t.total() == 0));
    }
}
