//! Event collocations scored by pointwise mutual information and Dunning's
//! log-likelihood ratio.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::sessionizer::SessionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Measure {
    #[default]
    Pmi,
    G2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationStat {
    pub x: char,
    pub y: char,
    pub c_xy: u64,
    /// Pairs with `x` first.
    pub c_x: u64,
    /// Pairs with `y` second.
    pub c_y: u64,
    pub n: u64,
    /// Bits.
    pub pmi: f64,
    pub g2: f64,
}

impl CollocationStat {
    pub fn score(&self, measure: Measure) -> f64 {
        match measure {
            Measure::Pmi => self.pmi,
            Measure::G2 => self.g2,
        }
    }
}

/// Ordered pair counts within sessions; pairs never span two sessions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairCounts {
    pub pairs: HashMap<(char, char), u64>,
    pub first: HashMap<char, u64>,
    pub second: HashMap<char, u64>,
    pub n: u64,
}

impl PairCounts {
    /// Counts `(s[i], s[j])` for `1 <= j - i <= window`; `window = 1` gives adjacent bigrams.
    pub fn from_sessions(sessions: &SessionSet, window: usize) -> Self {
        let mut counts = PairCounts::default();
        let window = window.max(1);
        for r in &sessions.records {
            let seq: Vec<char> = r.session_sequence.chars().collect();
            for i in 0..seq.len() {
                for j in (i + 1)..seq.len().min(i + window + 1) {
                    *counts.pairs.entry((seq[i], seq[j])).or_default() += 1;
                    *counts.first.entry(seq[i]).or_default() += 1;
                    *counts.second.entry(seq[j]).or_default() += 1;
                    counts.n += 1;
                }
            }
        }
        counts
    }
}

/// `log2(N c_xy / (c_x c_y))`
pub fn pmi(c_xy: u64, c_x: u64, c_y: u64, n: u64) -> f64 {
    ((n as f64 * c_xy as f64) / (c_x as f64 * c_y as f64)).log2()
}

/// `2 sum O ln(O / E)` over a 2x2 contingency table, with `0 ln 0 = 0`.
pub fn g_squared(table: [[u64; 2]; 2]) -> f64 {
    let n: u64 = table.iter().flatten().sum();
    if n == 0 {
        return 0.0;
    }
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let mut sum = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let observed = table[i][j] as f64;
            if observed > 0.0 {
                let expected = rows[i] as f64 * cols[j] as f64 / n as f64;
                sum += observed * (observed / expected).ln();
            }
        }
    }
    // rounding can push an independent table a hair below zero
    (2.0 * sum).max(0.0)
}

/// The contingency table for pair `(x, y)`.
pub fn contingency(c_xy: u64, c_x: u64, c_y: u64, n: u64) -> [[u64; 2]; 2] {
    [[c_xy, c_x - c_xy], [c_y - c_xy, n + c_xy - c_x - c_y]]
}

/// Scores every pair seen at least `min_count` times, best first.
pub fn extract_collocations(
    sessions: &SessionSet,
    min_count: u64,
    measure: Measure,
    window: usize,
) -> Vec<CollocationStat> {
    let counts = PairCounts::from_sessions(sessions, window);
    let mut stats: Vec<CollocationStat> = counts
        .pairs
        .iter()
        .filter(|(_, &c)| c >= min_count.max(1))
        .map(|(&(x, y), &c_xy)| {
            let c_x = counts.first[&x];
            let c_y = counts.second[&y];
            CollocationStat {
                x,
                y,
                c_xy,
                c_x,
                c_y,
                n: counts.n,
                pmi: pmi(c_xy, c_x, c_y, counts.n),
                g2: g_squared(contingency(c_xy, c_x, c_y, counts.n)),
            }
        })
        .collect();
    stats.sort_by(|a, b| {
        b.score(measure)
            .partial_cmp(&a.score(measure))
            .unwrap_or(Ordering::Equal)
            .then_with(|| (a.x, a.y).cmp(&(b.x, b.y)))
    });
    stats
}
