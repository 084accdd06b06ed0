use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;

use super::QueryError;
use crate::dictionary::Dictionary;
use crate::sessionizer::SessionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DurationBucket {
    Zero,
    UpTo10s,
    UpTo1m,
    UpTo5m,
    UpTo30m,
    Over30m,
}

impl DurationBucket {
    pub const ALL: [DurationBucket; 6] = [
        DurationBucket::Zero,
        DurationBucket::UpTo10s,
        DurationBucket::UpTo1m,
        DurationBucket::UpTo5m,
        DurationBucket::UpTo30m,
        DurationBucket::Over30m,
    ];

    pub fn of(seconds: u64) -> Self {
        match seconds {
            0 => DurationBucket::Zero,
            1..=10 => DurationBucket::UpTo10s,
            11..=60 => DurationBucket::UpTo1m,
            61..=300 => DurationBucket::UpTo5m,
            301..=1800 => DurationBucket::UpTo30m,
            _ => DurationBucket::Over30m,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DurationBucket::Zero => "0s",
            DurationBucket::UpTo10s => "(0,10s]",
            DurationBucket::UpTo1m => "(10s,60s]",
            DurationBucket::UpTo5m => "(1min,5min]",
            DurationBucket::UpTo30m => "(5min,30min]",
            DurationBucket::Over30m => ">30min",
        }
    }
}

impl fmt::Display for DurationBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryStats {
    pub date: NaiveDate,
    pub sessions_total: u64,
    /// Keyed by the client component of each session's first event.
    pub sessions_by_client: BTreeMap<String, u64>,
    /// Indexed like [`DurationBucket::ALL`].
    pub duration_histogram: [u64; 6],
}

impl SummaryStats {
    pub fn bucket(&self, b: DurationBucket) -> u64 {
        self.duration_histogram[b as usize]
    }
}

/// Daily session totals, broken down by client and by duration bucket.
pub fn summary_stats(sessions: &SessionSet, dict: &Dictionary, date: NaiveDate) -> Result<SummaryStats, QueryError> {
    if sessions.dictionary_id != dict.id() {
        return Err(QueryError::DictionaryMismatch {
            sessions: sessions.dictionary_id.clone(),
            query: dict.id().to_owned(),
        });
    }
    let mut stats = SummaryStats {
        date,
        sessions_total: 0,
        sessions_by_client: BTreeMap::new(),
        duration_histogram: [0; 6],
    };
    for r in &sessions.records {
        let client = r
            .session_sequence
            .chars()
            .next()
            .and_then(|s| dict.entry_for_symbol(s))
            .map(|e| e.name.client().to_owned())
            .ok_or_else(|| QueryError::UndecodableSession(r.session_id.clone()))?;
        stats.sessions_total += 1;
        *stats.sessions_by_client.entry(client).or_default() += 1;
        stats.duration_histogram[DurationBucket::of(r.duration) as usize] += 1;
    }
    Ok(stats)
}
