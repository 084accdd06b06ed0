//! Python bindings: corpora, dictionaries, session sequences, queries,
//! n-gram models, collocations and the catalog.

// the pyo3 0.22 method macros wrap `?` results in a redundant `.into()`
#![allow(clippy::useless_conversion)]

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;

use chrono::NaiveDate;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sessionseq::catalog::{self, Descriptions};
use sessionseq::dictionary::{build_dictionary, BuildOptions, Dictionary};
use sessionseq::event_model::{validate_event, ClientEvent, EventName, PatternMode, ValidationMode};
use sessionseq::generator::{generate, GenOptions};
use sessionseq::modeling::{self, Measure, Token};
use sessionseq::query::{self, CountMode, FunnelMode, SymbolClass};
use sessionseq::sessionizer::{self, SessionSet};

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn parse_date(date: &str) -> PyResult<NaiveDate> {
    date.parse().map_err(|e| value_err(format!("bad date {date:?}: {e}")))
}

fn pattern_mode(regex: bool) -> PatternMode {
    if regex {
        PatternMode::Regex
    } else {
        PatternMode::Glob
    }
}

/// Splits an event name into its six components.
#[pyfunction]
fn parse_event_name(name: &str) -> PyResult<Vec<String>> {
    let n = EventName::parse(name).map_err(value_err)?;
    Ok(n.components().iter().map(|c| c.to_string()).collect())
}

#[pyclass(name = "EventPattern", module = "pysessionseq", frozen)]
struct PyEventPattern {
    inner: sessionseq::event_model::EventPattern,
}

#[pymethods]
impl PyEventPattern {
    #[new]
    #[pyo3(signature = (pattern, regex = false))]
    fn new(pattern: &str, regex: bool) -> PyResult<Self> {
        let inner = sessionseq::event_model::EventPattern::compile(pattern, pattern_mode(regex)).map_err(value_err)?;
        Ok(PyEventPattern { inner })
    }

    fn matches(&self, name: &str) -> bool {
        self.inner.matches_str(name)
    }

    #[getter]
    fn source(&self) -> &str {
        self.inner.source()
    }

    fn __repr__(&self) -> String {
        format!("EventPattern({:?})", self.inner.source())
    }
}

/// An in-memory list of validated client events.
#[pyclass(name = "Corpus", module = "pysessionseq", frozen)]
struct PyCorpus {
    events: Vec<ClientEvent>,
}

#[pymethods]
impl PyCorpus {
    /// Parses JSON lines; returns the corpus and one message per rejected line.
    #[staticmethod]
    #[pyo3(signature = (lines, mode = "strict"))]
    fn from_json_lines(lines: Vec<String>, mode: &str) -> PyResult<(PyCorpus, Vec<String>)> {
        let mode: ValidationMode = mode.parse().map_err(value_err)?;
        let mut events = Vec::new();
        let mut rejected = Vec::new();
        for (i, line) in lines.iter().enumerate() {
            let parsed = serde_json::from_str(line)
                .map_err(|e| e.to_string())
                .and_then(|v| validate_event(&v, mode).map_err(|r| r.to_string()));
            match parsed {
                Ok(v) => events.push(v.event),
                Err(msg) => rejected.push(format!("line {}: {msg}", i + 1)),
            }
        }
        Ok((PyCorpus { events }, rejected))
    }

    fn to_json_lines(&self) -> Vec<String> {
        self.events.iter().map(ClientEvent::to_json_line).collect()
    }

    fn event_names(&self) -> Vec<String> {
        self.events.iter().map(|e| e.event_name.to_string()).collect()
    }

    fn __len__(&self) -> usize {
        self.events.len()
    }
}

/// Seeded Zipfian corpus covering one UTC day.
#[pyfunction]
#[pyo3(signature = (event_types = 50, zipf = 1.2, sessions = 1000, mean_length = 20.0, total_events = None,
                    users = None, logged_out_fraction = 0.1, seed = 0, date = "2012-01-01"))]
#[allow(clippy::too_many_arguments)]
fn generate_corpus(
    event_types: usize,
    zipf: f64,
    sessions: usize,
    mean_length: f64,
    total_events: Option<u64>,
    users: Option<usize>,
    logged_out_fraction: f64,
    seed: u64,
    date: &str,
) -> PyResult<PyCorpus> {
    let opts = GenOptions {
        event_types,
        zipf_exponent: zipf,
        sessions,
        mean_session_length: mean_length,
        total_events,
        users: users.unwrap_or((sessions / 3).max(1)),
        logged_out_fraction,
        date: parse_date(date)?,
        seed,
        ..GenOptions::default()
    };
    Ok(PyCorpus {
        events: generate(&opts).map_err(value_err)?,
    })
}

#[pyclass(name = "Dictionary", module = "pysessionseq", frozen)]
struct PyDictionary {
    inner: Dictionary,
}

#[pymethods]
impl PyDictionary {
    #[staticmethod]
    #[pyo3(signature = (corpus, date = "2012-01-01", sample_size = 5))]
    fn build(corpus: &PyCorpus, date: &str, sample_size: usize) -> PyResult<Self> {
        let opts = BuildOptions {
            sample_size,
            ..BuildOptions::default()
        };
        let inner = build_dictionary(&corpus.events, parse_date(date)?, &opts).map_err(value_err)?;
        Ok(PyDictionary { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyDictionary {
            inner: Dictionary::load(&path).map_err(io_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyDictionary {
            inner: Dictionary::from_json(text).map_err(value_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(io_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    #[getter]
    fn built_for(&self) -> String {
        self.inner.built_for().to_string()
    }

    fn encode(&self, name: &str) -> PyResult<String> {
        let name = EventName::parse(name).map_err(value_err)?;
        Ok(self.inner.encode(&name).map_err(value_err)?.to_string())
    }

    fn decode(&self, symbol: char) -> PyResult<String> {
        Ok(self.inner.decode(symbol).map_err(value_err)?.to_string())
    }

    /// `(name, count, code point)` in rank order.
    fn entries(&self) -> Vec<(String, u64, u32)> {
        self.inner
            .entries()
            .iter()
            .map(|e| (e.name.to_string(), e.count, u32::from(e.code_point)))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Sessions", module = "pysessionseq", frozen)]
struct PySessions {
    inner: SessionSet,
}

#[pymethods]
impl PySessions {
    #[getter]
    fn dictionary_id(&self) -> &str {
        &self.inner.dictionary_id
    }

    fn sequences(&self) -> Vec<String> {
        self.inner.records.iter().map(|r| r.session_sequence.clone()).collect()
    }

    fn records<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .records
            .iter()
            .map(|r| {
                let d = PyDict::new_bound(py);
                d.set_item("user_id", r.user_id)?;
                d.set_item("session_id", &r.session_id)?;
                d.set_item("ip", &r.ip)?;
                d.set_item("session_sequence", &r.session_sequence)?;
                d.set_item("duration", r.duration)?;
                d.set_item("start_ts", r.start_ts)?;
                Ok(d)
            })
            .collect()
    }

    fn decode(&self, dictionary: &PyDictionary) -> PyResult<Vec<Vec<String>>> {
        self.inner
            .records
            .iter()
            .map(|r| {
                let names = sessionizer::decode_sequence(&dictionary.inner, &r.session_sequence).map_err(value_err)?;
                Ok(names.iter().map(ToString::to_string).collect())
            })
            .collect()
    }

    fn total_events(&self) -> usize {
        self.inner.total_events()
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

#[pyfunction]
#[pyo3(signature = (corpus, dictionary, gap_seconds = sessionizer::DEFAULT_GAP_SECONDS))]
fn sessionize(corpus: &PyCorpus, dictionary: &PyDictionary, gap_seconds: u64) -> PyResult<PySessions> {
    let out = sessionizer::sessionize(&corpus.events, &dictionary.inner, gap_seconds).map_err(value_err)?;
    Ok(PySessions { inner: out.sessions })
}

fn expand(dictionary: &PyDictionary, pattern: &str, regex: bool) -> PyResult<SymbolClass> {
    let p = sessionseq::event_model::EventPattern::compile(pattern, pattern_mode(regex)).map_err(value_err)?;
    Ok(query::expand_pattern(&dictionary.inner, &p))
}

/// `mode` is "total" (every occurrence) or "sessions" (sessions containing one).
#[pyfunction]
#[pyo3(signature = (sessions, dictionary, pattern, mode = "total", regex = false))]
fn count_events(sessions: &PySessions, dictionary: &PyDictionary, pattern: &str, mode: &str, regex: bool) -> PyResult<u64> {
    let mode = match mode {
        "total" => CountMode::Total,
        "sessions" => CountMode::Sessions,
        other => return Err(value_err(format!("unknown count mode {other:?}"))),
    };
    let class = expand(dictionary, pattern, regex)?;
    query::count_events(&sessions.inner, &class, mode).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (sessions, dictionary, stages, contiguous = false, unique_users = false, regex = false))]
fn funnel(
    sessions: &PySessions,
    dictionary: &PyDictionary,
    stages: Vec<String>,
    contiguous: bool,
    unique_users: bool,
    regex: bool,
) -> PyResult<Vec<u64>> {
    let classes = stages
        .iter()
        .map(|s| expand(dictionary, s, regex))
        .collect::<PyResult<Vec<_>>>()?;
    let mode = if contiguous { FunnelMode::Contiguous } else { FunnelMode::InOrder };
    let result = if unique_users {
        query::funnel_unique_users(&sessions.inner, &classes, mode)
    } else {
        query::funnel(&sessions.inner, &classes, mode)
    };
    Ok(result.map_err(value_err)?.stage_counts)
}

/// Six tables of `(key, logged_in, logged_out)`; wildcarded components are "*".
#[pyfunction]
fn rollup(corpus: &PyCorpus) -> Vec<Vec<(Vec<String>, u64, u64)>> {
    query::rollup(&corpus.events)
        .iter()
        .map(|t| {
            t.rows
                .iter()
                .map(|(k, r)| (k.fields().iter().map(|s| s.to_string()).collect(), r.logged_in, r.logged_out))
                .collect()
        })
        .collect()
}

#[pyfunction]
#[pyo3(signature = (sessions, dictionary, date = "2012-01-01"))]
fn summary_stats<'py>(
    py: Python<'py>,
    sessions: &PySessions,
    dictionary: &PyDictionary,
    date: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let stats = query::summary_stats(&sessions.inner, &dictionary.inner, parse_date(date)?).map_err(value_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("sessions_total", stats.sessions_total)?;
    d.set_item("sessions_by_client", stats.sessions_by_client.clone())?;
    let buckets: BTreeMap<&str, u64> = query::DurationBucket::ALL
        .iter()
        .map(|&b| (b.label(), stats.bucket(b)))
        .collect();
    d.set_item("durations", buckets)?;
    Ok(d)
}

fn token(s: &str) -> PyResult<Token> {
    match s {
        "<s>" => Ok(Token::Start),
        "</s>" => Ok(Token::End),
        _ => {
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok(Token::Symbol(c)),
                _ => Err(value_err(format!("token {s:?} is not a symbol, <s> or </s>"))),
            }
        }
    }
}

#[pyclass(name = "NgramModel", module = "pysessionseq", frozen)]
struct PyNgramModel {
    inner: modeling::NgramModel,
}

#[pymethods]
impl PyNgramModel {
    #[staticmethod]
    #[pyo3(signature = (sessions, dictionary, n = 2, k = modeling::DEFAULT_K))]
    fn train(sessions: &PySessions, dictionary: &PyDictionary, n: usize, k: f64) -> PyResult<Self> {
        let inner = modeling::train_ngram(&sessions.inner, &dictionary.inner, n, k).map_err(value_err)?;
        Ok(PyNgramModel { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyNgramModel {
            inner: modeling::NgramModel::load(&path).map_err(io_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(io_err)
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k()
    }

    /// `P(w | context)`; tokens are one-symbol strings, "<s>" or "</s>".
    fn prob(&self, context: Vec<String>, w: &str) -> PyResult<f64> {
        if context.len() + 1 != self.inner.order() {
            return Err(value_err(format!("context must hold {} tokens", self.inner.order() - 1)));
        }
        let ctx = context.iter().map(|s| token(s)).collect::<PyResult<Vec<_>>>()?;
        Ok(self.inner.prob(&ctx, token(w)?))
    }

    fn cross_entropy(&self, sessions: &PySessions) -> PyResult<f64> {
        self.inner.cross_entropy(&sessions.inner).map_err(value_err)
    }

    fn perplexity(&self, sessions: &PySessions) -> PyResult<f64> {
        self.inner.perplexity(&sessions.inner).map_err(value_err)
    }
}

/// `(first, second, c_xy, c_x, c_y, n, pmi, g2)`, best first.
#[pyfunction]
#[pyo3(signature = (sessions, dictionary, min_count = 5, measure = "pmi", window = 1))]
#[allow(clippy::type_complexity)]
fn collocations(
    sessions: &PySessions,
    dictionary: &PyDictionary,
    min_count: u64,
    measure: &str,
    window: usize,
) -> PyResult<Vec<(String, String, u64, u64, u64, u64, f64, f64)>> {
    if sessions.inner.dictionary_id != dictionary.inner.id() {
        return Err(value_err("sessions were encoded with a different dictionary"));
    }
    let measure = match measure {
        "pmi" => Measure::Pmi,
        "g2" => Measure::G2,
        other => return Err(value_err(format!("unknown measure {other:?}"))),
    };
    modeling::extract_collocations(&sessions.inner, min_count, measure, window)
        .into_iter()
        .map(|s| {
            let x = dictionary.inner.decode(s.x).map_err(value_err)?.to_string();
            let y = dictionary.inner.decode(s.y).map_err(value_err)?.to_string();
            Ok((x, y, s.c_xy, s.c_x, s.c_y, s.n, s.pmi, s.g2))
        })
        .collect()
}

#[pyfunction]
fn g_squared(table: [[u64; 2]; 2]) -> f64 {
    modeling::g_squared(table)
}

#[pyfunction]
#[pyo3(signature = (dictionary, out, descriptions = None))]
fn generate_catalog<'py>(
    py: Python<'py>,
    dictionary: &PyDictionary,
    out: PathBuf,
    descriptions: Option<BTreeMap<String, String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let descriptions = Descriptions(descriptions.unwrap_or_default());
    let report = catalog::generate_catalog(&dictionary.inner, &descriptions, &out).map_err(io_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("entries", report.entries)?;
    d.set_item("documented", report.documented)?;
    d.set_item("stale_descriptions", report.stale_descriptions)?;
    d.set_item("index", report.index)?;
    Ok(d)
}

/// `(name, count)` of matching entries by descending count.
#[pyfunction]
#[pyo3(signature = (dictionary, pattern, regex = false))]
fn search_catalog(dictionary: &PyDictionary, pattern: &str, regex: bool) -> PyResult<Vec<(String, u64)>> {
    let p = sessionseq::event_model::EventPattern::compile(pattern, pattern_mode(regex)).map_err(value_err)?;
    Ok(catalog::search_catalog(&dictionary.inner, &p, &Descriptions::default())
        .into_iter()
        .map(|e| (e.event_name.to_string(), e.count))
        .collect())
}

#[pymodule]
fn pysessionseq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEventPattern>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyDictionary>()?;
    m.add_class::<PySessions>()?;
    m.add_class::<PyNgramModel>()?;
    m.add_function(wrap_pyfunction!(parse_event_name, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(sessionize, m)?)?;
    m.add_function(wrap_pyfunction!(count_events, m)?)?;
    m.add_function(wrap_pyfunction!(funnel, m)?)?;
    m.add_function(wrap_pyfunction!(rollup, m)?)?;
    m.add_function(wrap_pyfunction!(summary_stats, m)?)?;
    m.add_function(wrap_pyfunction!(collocations, m)?)?;
    m.add_function(wrap_pyfunction!(g_squared, m)?)?;
    m.add_function(wrap_pyfunction!(generate_catalog, m)?)?;
    m.add_function(wrap_pyfunction!(search_catalog, m)?)?;
    Ok(())
}
