//! Frequency-ordered event dictionary.
//!
//! Events are ranked by descending count (ties by ascending name) and the
//! rank-th event is assigned the rank-th code point of the [`alphabet`], so
//! frequent events get code points that need fewer UTF-8 bytes.

pub mod alphabet;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::event_model::{ClientEvent, EventName};
pub use alphabet::{code_point_for_rank, rank_of_code_point, AlphabetExhausted, ALPHABET_SIZE};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_SAMPLE_SEED: u64 = 0x5eed_d1c7;

#[derive(Debug, thiserror::Error)]
pub enum DictionaryError {
    #[error(transparent)]
    AlphabetExhausted(#[from] AlphabetExhausted),
    #[error("unknown event {0}")]
    UnknownEvent(String),
    #[error("unknown symbol U+{:04X} at position {position}", u32::from(*symbol))]
    UnknownSymbol { symbol: char, position: usize },
    #[error("malformed dictionary: {0}")]
    Malformed(String),
    #[error("dictionary i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("dictionary decode: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictEntry {
    pub name: EventName,
    pub count: u64,
    pub code_point: char,
    /// Raw records of this event, as they appeared in the logs.
    pub samples: Vec<Value>,
}

/// Bijection between event names and alphabet code points for one day.
#[derive(Debug, Clone)]
pub struct Dictionary {
    entries: Vec<DictEntry>,
    built_for: NaiveDate,
    version: u32,
    id: String,
    index: HashMap<EventName, usize>,
}

impl PartialEq for Dictionary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
            && self.built_for == other.built_for
            && self.version == other.version
    }
}

impl Dictionary {
    /// Ranks `(name, count, samples)` triples and assigns code points.
    pub fn from_counts<I>(built_for: NaiveDate, version: u32, counts: I) -> Result<Self, DictionaryError>
    where
        I: IntoIterator<Item = (EventName, u64, Vec<Value>)>,
    {
        let mut ranked: Vec<(EventName, u64, Vec<Value>)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(w) = ranked.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(DictionaryError::Malformed(format!("duplicate event {}", w[0].0)));
        }
        let entries = ranked
            .into_iter()
            .enumerate()
            .map(|(rank, (name, count, samples))| {
                Ok(DictEntry {
                    name,
                    count,
                    code_point: code_point_for_rank(rank as u64)?,
                    samples,
                })
            })
            .collect::<Result<Vec<_>, AlphabetExhausted>>()?;
        Ok(Self::assemble(entries, built_for, version))
    }

    fn assemble(entries: Vec<DictEntry>, built_for: NaiveDate, version: u32) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), i))
            .collect();
        let mut hasher = Sha256::new();
        for e in &entries {
            hasher.update(e.name.as_str().as_bytes());
            hasher.update(b"\t");
            hasher.update(e.count.to_string().as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let fingerprint: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Dictionary {
            id: format!("{built_for}-v{version}-{fingerprint}"),
            entries,
            built_for,
            version,
            index,
        }
    }

    /// Identifier carried by every sequence file encoded with this dictionary.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn built_for(&self) -> NaiveDate {
        self.built_for
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Entries in rank order.
    pub fn entries(&self) -> &[DictEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn entry(&self, name: &EventName) -> Option<&DictEntry> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn entry_for_symbol(&self, symbol: char) -> Option<&DictEntry> {
        let rank = rank_of_code_point(symbol)?;
        self.entries.get(usize::try_from(rank).ok()?)
    }

    pub fn encode(&self, name: &EventName) -> Result<char, DictionaryError> {
        self.entry(name)
            .map(|e| e.code_point)
            .ok_or_else(|| DictionaryError::UnknownEvent(name.to_string()))
    }

    pub fn decode(&self, symbol: char) -> Result<&EventName, DictionaryError> {
        self.entry_for_symbol(symbol)
            .map(|e| &e.name)
            .ok_or(DictionaryError::UnknownSymbol { symbol, position: 0 })
    }

    /// All symbols in rank order.
    pub fn symbols(&self) -> impl Iterator<Item = char> + '_ {
        self.entries.iter().map(|e| e.code_point)
    }

    pub fn load(path: &Path) -> Result<Self, DictionaryError> {
        let file = BufReader::new(File::open(path)?);
        let doc: DictionaryFile = serde_json::from_reader(file)?;
        Self::from_file(doc)
    }

    pub fn from_json(text: &str) -> Result<Self, DictionaryError> {
        Self::from_file(serde_json::from_str(text)?)
    }

    fn from_file(doc: DictionaryFile) -> Result<Self, DictionaryError> {
        if doc.format != FORMAT_VERSION {
            return Err(DictionaryError::Malformed(format!(
                "unsupported format {}",
                doc.format
            )));
        }
        let mut entries = Vec::with_capacity(doc.entries.len());
        for (rank, e) in doc.entries.into_iter().enumerate() {
            let expected = code_point_for_rank(rank as u64)?;
            if e.code_point != u32::from(expected) {
                return Err(DictionaryError::Malformed(format!(
                    "entry {rank} ({}) has code point {} but rank {rank} requires {}",
                    e.name,
                    e.code_point,
                    u32::from(expected)
                )));
            }
            entries.push(DictEntry {
                name: e.name,
                count: e.count,
                code_point: expected,
                samples: e.samples,
            });
        }
        for (rank, w) in entries.windows(2).enumerate() {
            let ordered = w[0].count > w[1].count || (w[0].count == w[1].count && w[0].name < w[1].name);
            if !ordered {
                return Err(DictionaryError::Malformed(format!(
                    "entries {rank} and {} violate count/name ordering",
                    rank + 1
                )));
            }
        }
        let dict = Self::assemble(entries, doc.built_for, doc.version);
        if let Some(id) = doc.id {
            if id != dict.id {
                return Err(DictionaryError::Malformed(format!(
                    "stored id {id} does not match contents ({})",
                    dict.id
                )));
            }
        }
        Ok(dict)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("dictionary always serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), DictionaryError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(self.to_json().as_bytes())?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    fn to_file(&self) -> DictionaryFile {
        DictionaryFile {
            format: FORMAT_VERSION,
            id: Some(self.id.clone()),
            version: self.version,
            built_for: self.built_for,
            entries: self
                .entries
                .iter()
                .map(|e| FileEntry {
                    name: e.name.clone(),
                    count: e.count,
                    code_point: u32::from(e.code_point),
                    samples: e.samples.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DictionaryFile {
    format: u32,
    #[serde(default)]
    id: Option<String>,
    version: u32,
    built_for: NaiveDate,
    entries: Vec<FileEntry>,
}

#[derive(Serialize, Deserialize)]
struct FileEntry {
    name: EventName,
    count: u64,
    code_point: u32,
    #[serde(default)]
    samples: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Raw records kept per event.
    pub sample_size: usize,
    pub sample_seed: u64,
    pub version: u32,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            sample_size: 5,
            sample_seed: DEFAULT_SAMPLE_SEED,
            version: 1,
        }
    }
}

/// Mergeable event-count histogram with bounded per-event samples.
///
/// Samples are a bottom-k selection under a seeded hash of each record's
/// canonical text, so the kept set depends only on the multiset of records,
/// not on arrival order or how the input was partitioned.
#[derive(Debug, Clone)]
pub struct Histogram {
    sample_size: usize,
    seed: u64,
    slots: HashMap<EventName, Slot>,
}

#[derive(Debug, Clone, Default)]
struct Slot {
    count: u64,
    // sorted ascending by (priority, record text), at most sample_size long
    samples: Vec<(u64, String)>,
}

impl Slot {
    fn offer(&mut self, limit: usize, candidate: (u64, String)) {
        if self.samples.len() == limit && self.samples.last().is_some_and(|worst| candidate >= *worst) {
            return;
        }
        let at = self.samples.partition_point(|s| *s < candidate);
        self.samples.insert(at, candidate);
        self.samples.truncate(limit);
    }
}

impl Histogram {
    pub fn new(sample_size: usize, seed: u64) -> Self {
        Histogram {
            sample_size,
            seed,
            slots: HashMap::new(),
        }
    }

    pub fn add(&mut self, event: &ClientEvent) {
        let slot = self.slots.entry(event.event_name.clone()).or_default();
        slot.count += 1;
        if self.sample_size > 0 {
            let line = event.to_json_line();
            let priority = sample_priority(self.seed, line.as_bytes());
            slot.offer(self.sample_size, (priority, line));
        }
    }

    pub fn merge(mut self, other: Histogram) -> Histogram {
        debug_assert_eq!((self.sample_size, self.seed), (other.sample_size, other.seed));
        for (name, theirs) in other.slots {
            let ours = self.slots.entry(name).or_default();
            ours.count += theirs.count;
            for s in theirs.samples {
                ours.offer(self.sample_size, s);
            }
        }
        self
    }

    pub fn distinct(&self) -> usize {
        self.slots.len()
    }

    pub fn finish(self, built_for: NaiveDate, version: u32) -> Result<Dictionary, DictionaryError> {
        let counts = self.slots.into_iter().map(|(name, slot)| {
            let samples = slot
                .samples
                .into_iter()
                .map(|(_, line)| serde_json::from_str(&line).expect("sample lines are JSON"))
                .collect();
            (name, slot.count, samples)
        });
        Dictionary::from_counts(built_for, version, counts)
    }
}

fn sample_priority(seed: u64, bytes: &[u8]) -> u64 {
    // FNV-1a, then a splitmix64 finalizer to spread the low bits
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Counts every event and assigns code points by descending frequency.
pub fn build_dictionary(
    events: &[ClientEvent],
    built_for: NaiveDate,
    options: &BuildOptions,
) -> Result<Dictionary, DictionaryError> {
    let histogram = events
        .par_chunks(4096)
        .fold(
            || Histogram::new(options.sample_size, options.sample_seed),
            |mut h, chunk| {
                chunk.iter().for_each(|e| h.add(e));
                h
            },
        )
        .reduce(
            || Histogram::new(options.sample_size, options.sample_seed),
            Histogram::merge,
        );
    histogram.finish(built_for, options.version)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::EventInitiator;
    use serde_json::Map;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2012, 1, 1).unwrap()
    }

    fn name(action: &str) -> EventName {
        EventName::parse(&format!("web:home:::x:{action}")).unwrap()
    }

    fn event(action: &str, ts: i64) -> ClientEvent {
        ClientEvent {
            event_initiator: EventInitiator::ClientUser,
            event_name: name(action),
            user_id: Some(1),
            session_id: "s".into(),
            ip: "10.0.0.1".into(),
            timestamp: ts,
            event_details: Map::new(),
        }
    }

    fn corpus(counts: &[(&str, usize)]) -> Vec<ClientEvent> {
        let mut out = Vec::new();
        let mut ts = 1;
        for &(a, n) in counts {
            for _ in 0..n {
                out.push(event(a, ts));
                ts += 1;
            }
        }
        out
    }

    #[test]
    fn ranks_by_count_then_name() {
        let events = corpus(&[("z", 5), ("x", 10), ("y", 5)]);
        let d = build_dictionary(&events, date(), &BuildOptions::default()).unwrap();
        let order: Vec<&str> = d.entries().iter().map(|e| e.name.action()).collect();
        assert_eq!(order, ["x", "y", "z"]);
        assert_eq!(d.encode(&name("x")).unwrap(), '!');
        assert_eq!(d.encode(&name("y")).unwrap(), '"');
        assert_eq!(d.encode(&name("z")).unwrap(), '#');
        assert_eq!(d.total_count(), 20);
    }

    #[test]
    fn empty_input() {
        let d = build_dictionary(&[], date(), &BuildOptions::default()).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn singleton_coding() {
        let d = Dictionary::from_counts(date(), 1, [(name("x"), 3, vec![])]).unwrap();
        assert_eq!(d.encode(&name("x")).unwrap(), '\u{21}');
        assert_eq!(d.decode('\u{21}').unwrap(), &name("x"));
        assert!(matches!(d.encode(&name("q")), Err(DictionaryError::UnknownEvent(_))));
        assert!(matches!(d.decode('\u{22}'), Err(DictionaryError::UnknownSymbol { .. })));
        assert!(matches!(d.decode(' '), Err(DictionaryError::UnknownSymbol { .. })));
    }

    #[test]
    fn samples_are_bounded_and_order_free() {
        let events = corpus(&[("x", 50), ("y", 2)]);
        let opts = BuildOptions {
            sample_size: 3,
            ..BuildOptions::default()
        };
        let d = build_dictionary(&events, date(), &opts).unwrap();
        assert_eq!(d.entries()[0].samples.len(), 3);
        assert_eq!(d.entries()[1].samples.len(), 2);
        for s in &d.entries()[0].samples {
            assert_eq!(s["event_name"], "web:home:::x:x");
        }

        let mut reversed = events.clone();
        reversed.reverse();
        let r = build_dictionary(&reversed, date(), &opts).unwrap();
        assert_eq!(d, r);
        assert_eq!(d.id(), r.id());

        let none = build_dictionary(&events, date(), &BuildOptions { sample_size: 0, ..opts }).unwrap();
        assert!(none.entries().iter().all(|e| e.samples.is_empty()));
    }

    #[test]
    fn file_round_trip() {
        let events = corpus(&[("a", 3), ("b", 1)]);
        let d = build_dictionary(&events, date(), &BuildOptions::default()).unwrap();
        let text = d.to_json();
        assert!(text.contains("\"code_point\": 33"));
        let back = Dictionary::from_json(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.id(), d.id());
    }

    #[test]
    fn rejects_tampered_files() {
        let d = build_dictionary(&corpus(&[("a", 3), ("b", 1)]), date(), &BuildOptions::default()).unwrap();
        let mut doc: Value = serde_json::from_str(&d.to_json()).unwrap();
        doc["entries"][1]["code_point"] = Value::from(40);
        assert!(matches!(
            Dictionary::from_json(&doc.to_string()),
            Err(DictionaryError::Malformed(_))
        ));

        let mut doc: Value = serde_json::from_str(&d.to_json()).unwrap();
        doc["entries"][1]["count"] = Value::from(9);
        assert!(matches!(
            Dictionary::from_json(&doc.to_string()),
            Err(DictionaryError::Malformed(_))
        ));
    }

    #[test]
    fn id_depends_on_contents() {
        let a = build_dictionary(&corpus(&[("a", 3)]), date(), &BuildOptions::default()).unwrap();
        let b = build_dictionary(&corpus(&[("a", 4)]), date(), &BuildOptions::default()).unwrap();
        assert_ne!(a.id(), b.id());
        assert!(a.id().starts_with("2012-01-01-v1-"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn counts() -> impl Strategy<Value = Vec<(String, usize)>> {
            proptest::collection::btree_map("[a-e]{1,3}", 1usize..40, 0..30)
                .prop_map(|m| m.into_iter().collect())
        }

        proptest! {
            #[test]
            fn monotone_bijective_and_shuffle_invariant(
                table in counts(),
                seed in any::<u64>(),
            ) {
                let borrowed: Vec<(&str, usize)> = table.iter().map(|(a, n)| (a.as_str(), *n)).collect();
                let events = corpus(&borrowed);
                let d = build_dictionary(&events, date(), &BuildOptions::default()).unwrap();
                prop_assert_eq!(d.len(), table.len());

                for a in d.entries() {
                    prop_assert_eq!(d.decode(a.code_point).unwrap(), &a.name);
                    prop_assert_eq!(d.encode(&a.name).unwrap(), a.code_point);
                    for b in d.entries() {
                        if a.count > b.count {
                            prop_assert!(a.code_point < b.code_point);
                            prop_assert!(a.code_point.len_utf8() <= b.code_point.len_utf8());
                        }
                    }
                }

                let mut shuffled = events.clone();
                let n = shuffled.len();
                let mut state = seed | 1;
                for i in (1..n).rev() {
                    state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                    shuffled.swap(i, (state % (i as u64 + 1)) as usize);
                }
                let again = build_dictionary(&shuffled, date(), &BuildOptions::default()).unwrap();
                prop_assert_eq!(&again, &d);
            }
        }
    }
}
