//! Add-k smoothed n-gram models over session sequences.
//!
//! Each session is padded with `n - 1` start markers and closed by one end
//! marker, so the model also learns where sessions stop. Start markers are
//! context only and never predicted.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::dictionary::Dictionary;
use crate::sessionizer::SessionSet;

pub const DEFAULT_K: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Start,
    Symbol(char),
    End,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Start => f.write_str("<s>"),
            Token::Symbol(c) => write!(f, "U+{:04X}", u32::from(*c)),
            Token::End => f.write_str("</s>"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<Token, u64>,
}

/// Raw n-gram counts; mergeable across corpus partitions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NgramCounts {
    n: usize,
    contexts: HashMap<Vec<Token>, ContextCounts>,
    tokens: u64,
}

impl NgramCounts {
    pub fn new(n: usize) -> Self {
        NgramCounts {
            n,
            ..Default::default()
        }
    }

    pub fn add_sequence(&mut self, seq: &str) {
        let mut history: Vec<Token> = vec![Token::Start; self.n - 1];
        let outcomes = seq.chars().map(Token::Symbol).chain(std::iter::once(Token::End));
        for w in outcomes {
            let slot = self.contexts.entry(history.clone()).or_default();
            slot.total += 1;
            *slot.next.entry(w).or_default() += 1;
            self.tokens += 1;
            if self.n > 1 {
                history.remove(0);
                history.push(w);
            }
        }
    }

    pub fn merge(mut self, other: NgramCounts) -> NgramCounts {
        for (ctx, theirs) in other.contexts {
            let ours = self.contexts.entry(ctx).or_default();
            ours.total += theirs.total;
            for (w, c) in theirs.next {
                *ours.next.entry(w).or_default() += c;
            }
        }
        self.tokens += other.tokens;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    n: usize,
    k: f64,
    dictionary_id: String,
    /// Predictable outcomes: dictionary symbols in rank order, then the end marker.
    vocab: Vec<Token>,
    counts: NgramCounts,
}

fn check_params(n: usize, k: f64) -> Result<(), ModelError> {
    if n == 0 {
        return Err(ModelError::InvalidOrder(n));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(ModelError::InvalidSmoothing(k));
    }
    Ok(())
}

fn check_dictionary(expected: &str, sessions: &SessionSet) -> Result<(), ModelError> {
    if sessions.dictionary_id != expected {
        return Err(ModelError::DictionaryMismatch {
            sessions: sessions.dictionary_id.clone(),
            model: expected.to_owned(),
        });
    }
    Ok(())
}

/// Fits an order-`n` model with add-`k` smoothing.
pub fn train_ngram(sessions: &SessionSet, dict: &Dictionary, n: usize, k: f64) -> Result<NgramModel, ModelError> {
    check_params(n, k)?;
    check_dictionary(dict.id(), sessions)?;
    if sessions.records.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    if let Some(bad) = sessions
        .records
        .iter()
        .flat_map(|r| r.session_sequence.chars())
        .find(|&c| dict.entry_for_symbol(c).is_none())
    {
        return Err(ModelError::UnknownSymbol(bad));
    }
    let counts = sessions
        .records
        .par_iter()
        .fold(
            || NgramCounts::new(n),
            |mut acc, r| {
                acc.add_sequence(&r.session_sequence);
                acc
            },
        )
        .reduce(|| NgramCounts::new(n), NgramCounts::merge);
    let vocab = dict.symbols().map(Token::Symbol).chain([Token::End]).collect();
    Ok(NgramModel {
        n,
        k,
        dictionary_id: dict.id().to_owned(),
        vocab,
        counts,
    })
}

impl NgramModel {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn dictionary_id(&self) -> &str {
        &self.dictionary_id
    }

    pub fn vocab(&self) -> &[Token] {
        &self.vocab
    }

    /// Tokens seen in training (end markers included).
    pub fn total_tokens(&self) -> u64 {
        self.counts.tokens
    }

    /// Contexts observed in training.
    pub fn contexts(&self) -> impl Iterator<Item = &[Token]> {
        self.counts.contexts.keys().map(Vec::as_slice)
    }

    pub fn count(&self, context: &[Token], w: Token) -> u64 {
        self.counts
            .contexts
            .get(context)
            .and_then(|c| c.next.get(&w))
            .copied()
            .unwrap_or(0)
    }

    /// `P(w | context) = (count(context, w) + k) / (count(context) + k |V|)`.
    ///
    /// `context` must hold exactly `n - 1` tokens.
    pub fn prob(&self, context: &[Token], w: Token) -> f64 {
        debug_assert_eq!(context.len(), self.n - 1);
        let v = self.vocab.len() as f64;
        let (num, den) = match self.counts.contexts.get(context) {
            Some(c) => (c.next.get(&w).copied().unwrap_or(0), c.total),
            None => (0, 0),
        };
        (num as f64 + self.k) / (den as f64 + self.k * v)
    }

    /// Per-token cross-entropy in bits over `sessions`, end markers included.
    pub fn cross_entropy(&self, sessions: &SessionSet) -> Result<f64, ModelError> {
        check_dictionary(&self.dictionary_id, sessions)?;
        let (bits, tokens) = sessions
            .records
            .par_iter()
            .map(|r| {
                let mut history = vec![Token::Start; self.n - 1];
                let mut bits = 0.0f64;
                let mut tokens = 0u64;
                let outcomes = r.session_sequence.chars().map(Token::Symbol).chain([Token::End]);
                for w in outcomes {
                    bits -= self.prob(&history, w).log2();
                    tokens += 1;
                    if self.n > 1 {
                        history.remove(0);
                        history.push(w);
                    }
                }
                (bits, tokens)
            })
            .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        if tokens == 0 {
            return Err(ModelError::EmptyCorpus);
        }
        Ok(bits / tokens as f64)
    }

    pub fn perplexity(&self, sessions: &SessionSet) -> Result<f64, ModelError> {
        Ok(self.cross_entropy(sessions)?.exp2())
    }

    pub fn to_json(&self) -> String {
        let mut contexts: BTreeMap<Vec<TokenRepr>, BTreeMap<TokenRepr, u64>> = BTreeMap::new();
        for (ctx, c) in &self.counts.contexts {
            contexts.insert(
                ctx.iter().map(|&t| TokenRepr::from(t)).collect(),
                c.next.iter().map(|(&t, &n)| (TokenRepr::from(t), n)).collect(),
            );
        }
        let doc = ModelFile {
            n: self.n,
            k: self.k,
            dictionary_id: self.dictionary_id.clone(),
            vocab: self.vocab.iter().map(|&t| TokenRepr::from(t)).collect(),
            total_tokens: self.counts.tokens,
            contexts: contexts
                .into_iter()
                .map(|(context, next)| ContextEntry {
                    context,
                    next: next.into_iter().collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        check_params(doc.n, doc.k)?;
        let token = |r: &TokenRepr| Token::try_from(r).map_err(ModelError::Format);
        let vocab = doc.vocab.iter().map(token).collect::<Result<Vec<_>, _>>()?;
        let mut counts = NgramCounts::new(doc.n);
        for entry in &doc.contexts {
            let ctx = entry.context.iter().map(token).collect::<Result<Vec<_>, _>>()?;
            if ctx.len() != doc.n - 1 {
                return Err(ModelError::Format(format!("context of length {} in an order-{} model", ctx.len(), doc.n)));
            }
            let slot = counts.contexts.entry(ctx).or_default();
            for (t, c) in &entry.next {
                let t = token(t)?;
                if !vocab.contains(&t) {
                    return Err(ModelError::Format(format!("outcome {t} not in vocabulary")));
                }
                slot.total += c;
                *slot.next.entry(t).or_default() += c;
            }
        }
        counts.tokens = doc.total_tokens;
        Ok(NgramModel {
            n: doc.n,
            k: doc.k,
            dictionary_id: doc.dictionary_id,
            vocab,
            counts,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(ModelError::Io)?;
        }
        std::fs::write(path, self.to_json() + "\n").map_err(ModelError::Io)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path).map_err(ModelError::Io)?)
    }
}

/// Tokens in the model file: code points as integers, markers as text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
enum TokenRepr {
    Code(u32),
    Marker(String),
}

impl From<Token> for TokenRepr {
    fn from(t: Token) -> Self {
        match t {
            Token::Symbol(c) => TokenRepr::Code(u32::from(c)),
            other => TokenRepr::Marker(other.to_string()),
        }
    }
}

impl TryFrom<&TokenRepr> for Token {
    type Error = String;
    fn try_from(r: &TokenRepr) -> Result<Self, Self::Error> {
        match r {
            TokenRepr::Code(c) => char::from_u32(*c)
                .map(Token::Symbol)
                .ok_or_else(|| format!("{c} is not a unicode scalar value")),
            TokenRepr::Marker(m) if m == "<s>" => Ok(Token::Start),
            TokenRepr::Marker(m) if m == "</s>" => Ok(Token::End),
            TokenRepr::Marker(m) => Err(format!("unknown marker {m:?}")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    n: usize,
    k: f64,
    dictionary_id: String,
    vocab: Vec<TokenRepr>,
    total_tokens: u64,
    contexts: Vec<ContextEntry>,
}

#[derive(Serialize, Deserialize)]
struct ContextEntry {
    context: Vec<TokenRepr>,
    next: Vec<(TokenRepr, u64)>,
}
