//! Queries over session sequences (counting, funnels, summary statistics)
//! and over raw events (namespace roll-ups).

mod funnel;
mod rollup;
mod summary;

use std::collections::BTreeSet;

use crate::dictionary::Dictionary;
use crate::event_model::EventPattern;
use crate::sessionizer::SessionSet;

pub use funnel::{funnel, funnel_unique_users, FunnelMode, FunnelResult};
pub use rollup::{rollup, RollupKey, RollupRow, RollupTable, ROLLUP_LEVELS};
pub use summary::{summary_stats, DurationBucket, SummaryStats};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("sessions were encoded with dictionary {sessions} but the query was resolved against {query}")]
    DictionaryMismatch { sessions: String, query: String },
    #[error("a funnel needs at least one stage")]
    EmptyFunnel,
    #[error("session {0} does not decode with the supplied dictionary")]
    UndecodableSession(String),
}

/// The code points of every dictionary event a pattern matches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolClass {
    pub pattern: String,
    pub dictionary_id: String,
    pub symbols: BTreeSet<char>,
}

impl SymbolClass {
    pub fn contains(&self, symbol: char) -> bool {
        self.symbols.contains(&symbol)
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Regex character class over the symbols, or `None` when empty.
    pub fn regex_class(&self) -> Option<String> {
        if self.symbols.is_empty() {
            return None;
        }
        let mut out = String::from("[");
        for &s in &self.symbols {
            out.push_str(&format!("\\x{{{:X}}}", u32::from(s)));
        }
        out.push(']');
        Some(out)
    }

    pub(crate) fn check(&self, sessions: &SessionSet) -> Result<(), QueryError> {
        if self.dictionary_id != sessions.dictionary_id {
            return Err(QueryError::DictionaryMismatch {
                sessions: sessions.dictionary_id.clone(),
                query: self.dictionary_id.clone(),
            });
        }
        Ok(())
    }
}

/// Resolves a pattern against a dictionary.
pub fn expand_pattern(dict: &Dictionary, pattern: &EventPattern) -> SymbolClass {
    SymbolClass {
        pattern: pattern.source().to_owned(),
        dictionary_id: dict.id().to_owned(),
        symbols: dict
            .entries()
            .iter()
            .filter(|e| pattern.matches(&e.name))
            .map(|e| e.code_point)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountMode {
    /// Every occurrence.
    #[default]
    Total,
    /// Sessions with at least one occurrence.
    Sessions,
}

pub fn count_events(sessions: &SessionSet, class: &SymbolClass, mode: CountMode) -> Result<u64, QueryError> {
    class.check(sessions)?;
    let per_session = sessions
        .records
        .iter()
        .map(|r| r.session_sequence.chars().filter(|&c| class.contains(c)).count() as u64);
    Ok(match mode {
        CountMode::Total => per_session.sum(),
        CountMode::Sessions => per_session.filter(|&n| n > 0).count() as u64,
    })
}
