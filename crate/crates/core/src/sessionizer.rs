//! Session reconstruction and the materialized session sequence files.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, DictionaryError};
use crate::event_model::{ClientEvent, EventName};

/// Inactivity interval that closes a session.
pub const DEFAULT_GAP_SECONDS: u64 = 1800;

pub const SEQUENCE_FILE: &str = "part-00000.seq";
pub const DICTIONARY_REF_FILE: &str = "_dictionary.json";

/// One reconstructed session.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionRecord {
    pub user_id: Option<u64>,
    pub session_id: String,
    pub ip: String,
    /// One dictionary code point per event, in event order.
    pub session_sequence: String,
    /// Whole seconds between the first and last event.
    pub duration: u64,
    /// Timestamp of the first event, ms.
    pub start_ts: i64,
}

impl SessionRecord {
    pub fn len(&self) -> usize {
        self.session_sequence.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.session_sequence.is_empty()
    }
}

/// Sessions encoded with one dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSet {
    pub dictionary_id: String,
    pub records: Vec<SessionRecord>,
}

impl SessionSet {
    pub fn new(dictionary_id: impl Into<String>, records: Vec<SessionRecord>) -> Self {
        SessionSet {
            dictionary_id: dictionary_id.into(),
            records,
        }
    }

    /// Keeps only logged-in sessions whose user is in `users`.
    pub fn restrict_to_users(&self, users: &std::collections::HashSet<u64>) -> SessionSet {
        SessionSet {
            dictionary_id: self.dictionary_id.clone(),
            records: self
                .records
                .iter()
                .filter(|r| r.user_id.is_some_and(|u| users.contains(&u)))
                .cloned()
                .collect(),
        }
    }

    pub fn total_events(&self) -> usize {
        self.records.iter().map(SessionRecord::len).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionizeError {
    #[error("gap_seconds must be positive")]
    InvalidGap,
}

#[derive(Debug, Clone)]
pub struct SessionizeOutput {
    pub sessions: SessionSet,
    /// Events whose names the dictionary does not know; skipped.
    pub unknown_events: u64,
    pub unknown_names: Vec<String>,
}

struct Keyed<'a> {
    ts: i64,
    name: &'a EventName,
    seq: usize,
    ip: &'a str,
}

/// Groups events by `(user_id, session_id)`, orders each group by
/// `(timestamp, name, input position)` and starts a new session whenever the
/// gap to the previous event is strictly greater than `gap_seconds`.
pub fn sessionize(
    events: &[ClientEvent],
    dict: &Dictionary,
    gap_seconds: u64,
) -> Result<SessionizeOutput, SessionizeError> {
    if gap_seconds == 0 {
        return Err(SessionizeError::InvalidGap);
    }
    let gap_ms = i64::try_from(gap_seconds.saturating_mul(1000)).unwrap_or(i64::MAX);

    let mut unknown_events = 0u64;
    let mut unknown_names = std::collections::BTreeSet::new();
    let mut groups: HashMap<(Option<u64>, &str), Vec<Keyed<'_>>> = HashMap::new();
    for (seq, e) in events.iter().enumerate() {
        if dict.entry(&e.event_name).is_none() {
            unknown_events += 1;
            unknown_names.insert(e.event_name.to_string());
            continue;
        }
        groups
            .entry((e.user_id, e.session_id.as_str()))
            .or_default()
            .push(Keyed {
                ts: e.timestamp,
                name: &e.event_name,
                seq,
                ip: &e.ip,
            });
    }

    let mut records: Vec<SessionRecord> = groups
        .into_par_iter()
        .flat_map_iter(|((user_id, session_id), mut group)| {
            group.sort_by(|a, b| (a.ts, a.name, a.seq).cmp(&(b.ts, b.name, b.seq)));
            split_group(user_id, session_id, &group, dict, gap_ms)
        })
        .collect();
    records.sort_by(|a, b| (a.user_id, &a.session_id, a.start_ts).cmp(&(b.user_id, &b.session_id, b.start_ts)));

    Ok(SessionizeOutput {
        sessions: SessionSet::new(dict.id(), records),
        unknown_events,
        unknown_names: unknown_names.into_iter().collect(),
    })
}

fn split_group(
    user_id: Option<u64>,
    session_id: &str,
    group: &[Keyed<'_>],
    dict: &Dictionary,
    gap_ms: i64,
) -> Vec<SessionRecord> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=group.len() {
        if i == group.len() || group[i].ts - group[i - 1].ts > gap_ms {
            let run = &group[start..i];
            let session_sequence = run
                .iter()
                .map(|k| dict.encode(k.name).expect("unknown names filtered"))
                .collect();
            let first = run[0].ts;
            let last = run[run.len() - 1].ts;
            out.push(SessionRecord {
                user_id,
                session_id: session_id.to_owned(),
                ip: run[0].ip.to_owned(),
                session_sequence,
                duration: u64::try_from((last - first) / 1000).unwrap_or(0),
                start_ts: first,
            });
            start = i;
        }
    }
    out
}

/// Maps a sequence back to event names; errors name the offending position.
pub fn decode_sequence(dict: &Dictionary, seq: &str) -> Result<Vec<EventName>, DictionaryError> {
    seq.chars()
        .enumerate()
        .map(|(position, symbol)| {
            dict.entry_for_symbol(symbol)
                .map(|e| e.name.clone())
                .ok_or(DictionaryError::UnknownSymbol { symbol, position })
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum SequenceFileError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {source}", path.display())]
    Decode {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Sibling of each day's sequence file naming the dictionary that encoded it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryRef {
    pub dictionary_id: String,
    pub dictionary_path: String,
    pub built_for: NaiveDate,
}

/// `root/YYYY/MM/DD`
pub fn sequence_dir(root: &Path, date: NaiveDate) -> PathBuf {
    root.join(date.format("%Y/%m/%d").to_string())
}

/// Writes one day's sessions as JSON lines plus the dictionary reference.
pub fn write_sequences(
    root: &Path,
    date: NaiveDate,
    sessions: &SessionSet,
    dictionary_path: &str,
) -> Result<PathBuf, SequenceFileError> {
    let dir = sequence_dir(root, date);
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| SequenceFileError::Io { path, source }
    };
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    let path = dir.join(SEQUENCE_FILE);
    let mut out = BufWriter::new(File::create(&path).map_err(io(&path))?);
    for r in &sessions.records {
        let line = serde_json::to_string(r).expect("session records serialize");
        out.write_all(line.as_bytes()).map_err(io(&path))?;
        out.write_all(b"\n").map_err(io(&path))?;
    }
    out.flush().map_err(io(&path))?;

    let reference = DictionaryRef {
        dictionary_id: sessions.dictionary_id.clone(),
        dictionary_path: dictionary_path.to_owned(),
        built_for: date,
    };
    let ref_path = dir.join(DICTIONARY_REF_FILE);
    let text = serde_json::to_string_pretty(&reference).expect("reference serializes") + "\n";
    fs::write(&ref_path, text).map_err(io(&ref_path))?;
    Ok(path)
}

pub fn read_dictionary_ref(root: &Path, date: NaiveDate) -> Result<DictionaryRef, SequenceFileError> {
    let path = sequence_dir(root, date).join(DICTIONARY_REF_FILE);
    let text = fs::read_to_string(&path).map_err(|source| SequenceFileError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| SequenceFileError::Decode { path, line: 1, source })
}

/// Reads one day's sessions, tagged with the dictionary id from the sibling reference.
pub fn read_sequences(root: &Path, date: NaiveDate) -> Result<SessionSet, SequenceFileError> {
    let reference = read_dictionary_ref(root, date)?;
    let path = sequence_dir(root, date).join(SEQUENCE_FILE);
    let file = File::open(&path).map_err(|source| SequenceFileError::Io {
        path: path.clone(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| SequenceFileError::Io {
            path: path.clone(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| SequenceFileError::Decode {
            path: path.clone(),
            line: idx + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(SessionSet::new(reference.dictionary_id, records))
}
