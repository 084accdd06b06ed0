use std::collections::HashSet;
use std::fmt;

use regex::Regex;

use super::{QueryError, SymbolClass};
use crate::sessionizer::{SessionRecord, SessionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FunnelMode {
    /// Stages in order, other events allowed in between.
    #[default]
    InOrder,
    /// Stages on consecutive events.
    Contiguous,
}

/// Sessions (or users) completing each prefix of a funnel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunnelResult {
    pub stage_counts: Vec<u64>,
}

impl fmt::Display for FunnelResult {
    /// `(0, n0) (1, n1) ...`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .stage_counts
            .iter()
            .enumerate()
            .map(|(i, n)| format!("({i}, {n})"))
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// One regex per funnel prefix: `S0`, `S0.*S1`, ... (or `S0S1...` when
/// contiguous). `None` once a stage can never match.
fn prefix_matchers(stages: &[SymbolClass], mode: FunnelMode) -> Vec<Option<Regex>> {
    let glue = match mode {
        FunnelMode::InOrder => ".*",
        FunnelMode::Contiguous => "",
    };
    let mut body = String::from("(?s)");
    let mut dead = false;
    stages
        .iter()
        .enumerate()
        .map(|(i, stage)| {
            match stage.regex_class() {
                Some(class) if !dead => {
                    if i > 0 {
                        body.push_str(glue);
                    }
                    body.push_str(&class);
                }
                _ => dead = true,
            }
            (!dead).then(|| Regex::new(&body).expect("generated funnel regex is valid"))
        })
        .collect()
}

fn validate(sessions: &SessionSet, stages: &[SymbolClass]) -> Result<(), QueryError> {
    if stages.is_empty() {
        return Err(QueryError::EmptyFunnel);
    }
    stages.iter().try_for_each(|s| s.check(sessions))
}

/// Number of stages `record` completes.
fn depth(record: &SessionRecord, matchers: &[Option<Regex>]) -> usize {
    // prefixes are nested, so stop at the first one that fails
    matchers
        .iter()
        .take_while(|m| m.as_ref().is_some_and(|re| re.is_match(&record.session_sequence)))
        .count()
}

/// Counts sessions completing stages `0..=k` for each `k`.
pub fn funnel(sessions: &SessionSet, stages: &[SymbolClass], mode: FunnelMode) -> Result<FunnelResult, QueryError> {
    validate(sessions, stages)?;
    let matchers = prefix_matchers(stages, mode);
    let mut stage_counts = vec![0u64; stages.len()];
    for r in &sessions.records {
        for slot in &mut stage_counts[..depth(r, &matchers)] {
            *slot += 1;
        }
    }
    Ok(FunnelResult { stage_counts })
}

#[derive(Clone, Copy, Hash, PartialEq, Eq)]
enum UserKey<'a> {
    User(u64),
    // logged-out traffic: one pseudo-user per cookie session id
    Anonymous(&'a str),
}

/// Like [`funnel`], but counts distinct users rather than sessions.
pub fn funnel_unique_users(
    sessions: &SessionSet,
    stages: &[SymbolClass],
    mode: FunnelMode,
) -> Result<FunnelResult, QueryError> {
    validate(sessions, stages)?;
    let matchers = prefix_matchers(stages, mode);
    let mut users: Vec<HashSet<UserKey<'_>>> = (0..stages.len()).map(|_| HashSet::new()).collect();
    for r in &sessions.records {
        let d = depth(r, &matchers);
        let key = match r.user_id {
            Some(u) => UserKey::User(u),
            None => UserKey::Anonymous(&r.session_id),
        };
        for set in &mut users[..d] {
            set.insert(key);
        }
    }
    Ok(FunnelResult {
        stage_counts: users.iter().map(|s| s.len() as u64).collect(),
    })
}
