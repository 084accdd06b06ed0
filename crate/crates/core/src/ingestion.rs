//! Reading and writing hourly-partitioned client event logs.
//!
//! Layout: `root/category/YYYY/MM/DD/HH/*.log` (or `*.log.gz`), one JSON
//! record per line. Hours without a directory are simply empty.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Timelike};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rayon::prelude::*;
use serde_json::Value;

use crate::event_model::{validate_event, ClientEvent, ValidationMode};

/// Upper bound on rejected-record samples kept in [`IngestStats`].
pub const MAX_REJECTED_SAMPLES: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("invalid log window: {0}")]
    InvalidWindow(String),
    #[error("event at {timestamp} ms falls outside the log window")]
    OutsideWindow { timestamp: i64 },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_owned(),
        source,
    }
}

/// An inclusive range of UTC hours for one log category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogWindow {
    pub root: PathBuf,
    pub category: String,
    start: NaiveDateTime,
    end: NaiveDateTime,
}

fn truncate_to_hour(t: NaiveDateTime) -> NaiveDateTime {
    t.date().and_hms_opt(t.hour(), 0, 0).expect("valid hour")
}

impl LogWindow {
    pub fn new(
        root: impl Into<PathBuf>,
        category: impl Into<String>,
        start: NaiveDateTime,
        end: NaiveDateTime,
    ) -> Result<Self, IngestError> {
        let (start, end) = (truncate_to_hour(start), truncate_to_hour(end));
        if start > end {
            return Err(IngestError::InvalidWindow(format!("{start} is after {end}")));
        }
        let category = category.into();
        if category.is_empty() || category.contains(['/', '\\']) || category == "." || category == ".." {
            return Err(IngestError::InvalidWindow(format!("bad category {category:?}")));
        }
        Ok(LogWindow {
            root: root.into(),
            category,
            start,
            end,
        })
    }

    /// Hours 00 through 23 of `date`.
    pub fn day(root: impl Into<PathBuf>, category: impl Into<String>, date: NaiveDate) -> Result<Self, IngestError> {
        let start = date.and_hms_opt(0, 0, 0).expect("midnight");
        Self::new(root, category, start, start + Duration::hours(23))
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn end(&self) -> NaiveDateTime {
        self.end
    }

    pub fn hours(&self) -> impl Iterator<Item = NaiveDateTime> + '_ {
        let n = (self.end - self.start).num_hours();
        (0..=n).map(move |h| self.start + Duration::hours(h))
    }

    pub fn hour_dir(&self, hour: NaiveDateTime) -> PathBuf {
        self.root
            .join(&self.category)
            .join(hour.format("%Y/%m/%d/%H").to_string())
    }

    pub fn contains_timestamp(&self, ts_ms: i64) -> bool {
        hour_of(ts_ms).is_some_and(|h| self.start <= h && h <= self.end)
    }
}

fn hour_of(ts_ms: i64) -> Option<NaiveDateTime> {
    DateTime::from_timestamp_millis(ts_ms).map(|t| truncate_to_hour(t.naive_utc()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRecord {
    pub file: PathBuf,
    /// 1-based line number.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub files_read: u64,
    pub records_ok: u64,
    pub records_rejected: u64,
    pub warnings: u64,
    pub rejected_samples: Vec<RejectedRecord>,
}

impl IngestStats {
    pub fn lines(&self) -> u64 {
        self.records_ok + self.records_rejected
    }

    /// Combines two partial tallies; associative and commutative.
    pub fn merge(mut self, other: IngestStats) -> IngestStats {
        self.files_read += other.files_read;
        self.records_ok += other.records_ok;
        self.records_rejected += other.records_rejected;
        self.warnings += other.warnings;
        self.rejected_samples.extend(other.rejected_samples);
        self.rejected_samples
            .sort_by(|a, b| (&a.file, a.line).cmp(&(&b.file, b.line)));
        self.rejected_samples.truncate(MAX_REJECTED_SAMPLES);
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub events: Vec<ClientEvent>,
    pub stats: IngestStats,
}

/// Log files under one hour directory, sorted by name.
fn list_hour_files(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(dir)(e)),
    };
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(io_err(dir))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if path.is_file() && (name.ends_with(".log") || name.ends_with(".log.gz")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn list_window_files(window: &LogWindow) -> Result<Vec<PathBuf>, IngestError> {
    let mut all = Vec::new();
    for hour in window.hours() {
        all.extend(list_hour_files(&window.hour_dir(hour))?);
    }
    Ok(all)
}

fn open_log(path: &Path) -> Result<Box<dyn BufRead + Send>, IngestError> {
    let file = File::open(path).map_err(io_err(path))?;
    let reader: Box<dyn Read + Send> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(reader)))
}

/// Decodes and validates one log file. Bad lines are tallied, never fatal.
pub fn scan_file(path: &Path, mode: ValidationMode) -> Result<Ingested, IngestError> {
    let mut out = Ingested::default();
    out.stats.files_read = 1;
    let reject = |stats: &mut IngestStats, line: u64, reason: String| {
        stats.records_rejected += 1;
        if stats.rejected_samples.len() < MAX_REJECTED_SAMPLES {
            stats.rejected_samples.push(RejectedRecord {
                file: path.to_owned(),
                line,
                reason,
            });
        }
    };
    for (idx, raw) in open_log(path)?.split(b'\n').enumerate() {
        let line_no = idx as u64 + 1;
        let mut raw = raw.map_err(io_err(path))?;
        if raw.last() == Some(&b'\r') {
            raw.pop();
        }
        let text = match std::str::from_utf8(&raw) {
            Ok(t) => t,
            Err(e) => {
                reject(&mut out.stats, line_no, format!("invalid utf-8: {e}"));
                continue;
            }
        };
        if text.trim().is_empty() {
            reject(&mut out.stats, line_no, "empty line".to_owned());
            continue;
        }
        let value: Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => {
                reject(&mut out.stats, line_no, format!("undecodable record: {e}"));
                continue;
            }
        };
        match validate_event(&value, mode) {
            Ok(v) => {
                out.stats.records_ok += 1;
                out.stats.warnings += v.warnings.len() as u64;
                out.events.push(v.event);
            }
            Err(report) => {
                out.stats.warnings += report.warnings.len() as u64;
                reject(&mut out.stats, line_no, report.to_string());
            }
        }
    }
    Ok(out)
}

/// Reads every log file in `window`, in parallel.
///
/// Only multiset delivery is guaranteed; callers must not rely on the order
/// of the returned events.
pub fn scan_log_window(window: &LogWindow, mode: ValidationMode) -> Result<Ingested, IngestError> {
    let files = list_window_files(window)?;
    let parts = files
        .par_iter()
        .map(|f| scan_file(f, mode))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Ingested::default();
    for part in parts {
        out.events.extend(part.events);
        out.stats = out.stats.merge(part.stats);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WriteOptions {
    pub gzip: bool,
}

/// Writes `events` into the hour directories their timestamps fall in, one
/// `part-00000.log` file per hour, preserving input order within an hour.
pub fn write_log_window(
    events: &[ClientEvent],
    window: &LogWindow,
    options: WriteOptions,
) -> Result<Vec<PathBuf>, IngestError> {
    let mut by_hour: std::collections::BTreeMap<NaiveDateTime, Vec<&ClientEvent>> = Default::default();
    for e in events {
        if !window.contains_timestamp(e.timestamp) {
            return Err(IngestError::OutsideWindow {
                timestamp: e.timestamp,
            });
        }
        let hour = hour_of(e.timestamp).expect("checked by contains_timestamp");
        by_hour.entry(hour).or_default().push(e);
    }
    let mut written = Vec::with_capacity(by_hour.len());
    for (hour, batch) in by_hour {
        let dir = window.hour_dir(hour);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(if options.gzip { "part-00000.log.gz" } else { "part-00000.log" });
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut sink: Box<dyn Write> = if options.gzip {
            Box::new(GzEncoder::new(BufWriter::new(file), Compression::default()))
        } else {
            Box::new(BufWriter::new(file))
        };
        for e in batch {
            sink.write_all(e.to_json_line().as_bytes()).map_err(io_err(&path))?;
            sink.write_all(b"\n").map_err(io_err(&path))?;
        }
        sink.flush().map_err(io_err(&path))?;
        drop(sink);
        written.push(path);
    }
    Ok(written)
}
