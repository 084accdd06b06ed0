//! Command-line front end.
//!
//! Every path is resolved against `--root`. Settings come from flags, then an
//! optional TOML config file with the same keys, then built-in defaults.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{Duration, NaiveDate};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::catalog::{generate_catalog, search_catalog, Descriptions};
use crate::dictionary::{build_dictionary, BuildOptions, Dictionary};
use crate::event_model::{EventPattern, PatternMode, ValidationMode};
use crate::generator::{generate, GenOptions};
use crate::ingestion::{scan_log_window, write_log_window, Ingested, LogWindow, WriteOptions};
use crate::modeling::{extract_collocations, train_ngram, Measure, NgramModel, DEFAULT_K};
use crate::query::{
    count_events, expand_pattern, funnel, funnel_unique_users, rollup, summary_stats, CountMode, DurationBucket,
    FunnelMode, SymbolClass,
};
use crate::sessionizer::{read_sequences, sessionize, write_sequences, SessionSet, DEFAULT_GAP_SECONDS};

#[derive(Debug, Parser)]
#[command(name = "sessionseq", version, about = "Client event log analytics over session sequences")]
#[command(after_help = "Patterns: globs by default, where `*` matches any run of characters including \
colons (`web:home:mentions:*`, `*:profile_click`). With --regex the pattern is a regular expression \
anchored at both ends.")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Strict,
    Lenient,
}

impl From<ModeArg> for ValidationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => ValidationMode::Strict,
            ModeArg::Lenient => ValidationMode::Lenient,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Base directory for every relative path.
    #[arg(long, global = true)]
    pub root: Option<PathBuf>,
    /// TOML file with defaults for the options below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub log_root: Option<PathBuf>,
    #[arg(long, global = true)]
    pub sequences_root: Option<PathBuf>,
    /// Dictionary file; defaults to dictionaries/<date>.json.
    #[arg(long, global = true)]
    pub dictionary: Option<PathBuf>,
    #[arg(long, global = true)]
    pub category: Option<String>,
    /// Day to process, YYYY-MM-DD.
    #[arg(long, global = true)]
    pub date: Option<NaiveDate>,
    /// First hour of the log window.
    #[arg(long, global = true)]
    pub start_hour: Option<u32>,
    /// Number of hours in the log window.
    #[arg(long, global = true)]
    pub hours: Option<u32>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, global = true)]
    pub gap_seconds: Option<u64>,
    /// Add-k smoothing constant.
    #[arg(long, global = true)]
    pub k: Option<f64>,
    /// Raw samples kept per dictionary entry.
    #[arg(long, global = true)]
    pub sample_size: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

/// Keys accepted in the config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub log_root: Option<PathBuf>,
    pub sequences_root: Option<PathBuf>,
    pub dictionary_path: Option<PathBuf>,
    pub category: Option<String>,
    pub date: Option<NaiveDate>,
    pub start_hour: Option<u32>,
    pub hours: Option<u32>,
    pub mode: Option<ModeArg>,
    pub gap_seconds: Option<u64>,
    pub k: Option<f64>,
    pub sample_size: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub root: PathBuf,
    pub log_root: PathBuf,
    pub sequences_root: PathBuf,
    pub dictionary_path: PathBuf,
    pub category: String,
    pub date: NaiveDate,
    pub start_hour: u32,
    pub hours: u32,
    pub mode: ValidationMode,
    pub gap_seconds: u64,
    pub k: f64,
    pub sample_size: usize,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Config {
    pub fn resolve(args: &GlobalArgs) -> Result<Config> {
        let root = args.root.clone().unwrap_or_else(|| PathBuf::from("."));
        let file = match &args.config {
            Some(p) => {
                let path = root.join(p);
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str::<FileConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => FileConfig::default(),
        };
        let date = args
            .date
            .or(file.date)
            .unwrap_or_else(|| GenOptions::default().date);
        let dictionary = args
            .dictionary
            .clone()
            .or(file.dictionary_path)
            .unwrap_or_else(|| PathBuf::from(format!("dictionaries/{date}.json")));
        let cfg = Config {
            log_root: root.join(args.log_root.clone().or(file.log_root).unwrap_or_else(|| "logs".into())),
            sequences_root: root.join(
                args.sequences_root
                    .clone()
                    .or(file.sequences_root)
                    .unwrap_or_else(|| "sequences".into()),
            ),
            dictionary_path: root.join(dictionary),
            category: args
                .category
                .clone()
                .or(file.category)
                .unwrap_or_else(|| "client_events".into()),
            date,
            start_hour: args.start_hour.or(file.start_hour).unwrap_or(0),
            hours: args.hours.or(file.hours).unwrap_or(24),
            mode: args.mode.or(file.mode).unwrap_or(ModeArg::Strict).into(),
            gap_seconds: args.gap_seconds.or(file.gap_seconds).unwrap_or(DEFAULT_GAP_SECONDS),
            k: args.k.or(file.k).unwrap_or(DEFAULT_K),
            sample_size: args.sample_size.or(file.sample_size).unwrap_or(BuildOptions::default().sample_size),
            seed: args.seed.or(file.seed).unwrap_or(0),
            workers: args.workers.or(file.workers),
            root,
        };
        if cfg.start_hour > 23 || cfg.hours == 0 {
            bail!("the log window needs --start-hour in 0..=23 and --hours >= 1");
        }
        Ok(cfg)
    }

    pub fn window(&self) -> Result<LogWindow> {
        let start = self.date.and_hms_opt(self.start_hour, 0, 0).context("bad start hour")?;
        let end = start + Duration::hours(i64::from(self.hours) - 1);
        Ok(LogWindow::new(&self.log_root, &self.category, start, end)?)
    }

    fn path(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }
}

#[derive(Debug, Clone, Args)]
pub struct PatternArgs {
    /// Treat patterns as anchored regular expressions instead of globs.
    #[arg(long)]
    pub regex: bool,
}

impl PatternArgs {
    fn compile(&self, text: &str) -> Result<EventPattern> {
        let mode = if self.regex { PatternMode::Regex } else { PatternMode::Glob };
        Ok(EventPattern::compile(text, mode)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureArg {
    Pmi,
    G2,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic Zipfian corpus into the log window's hour directories.
    Gen {
        /// Number of distinct event types.
        #[arg(long, default_value_t = 50)]
        events: usize,
        #[arg(long, default_value_t = 1.2)]
        zipf: f64,
        #[arg(long, default_value_t = 1000)]
        sessions: usize,
        #[arg(long, default_value_t = 20.0)]
        mean_length: f64,
        /// Stop after this many events.
        #[arg(long)]
        total_events: Option<u64>,
        /// Distinct logged-in users; defaults to a third of the sessions.
        #[arg(long)]
        users: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        logged_out_fraction: f64,
        #[arg(long)]
        gzip: bool,
    },
    /// Check every record in the log window and report what would be rejected.
    Validate,
    /// Count the log window's events and write the day's dictionary.
    BuildDict,
    /// Turn the log window into session sequences.
    Sessionize,
    /// Count events matching a pattern.
    Count {
        #[arg(long)]
        pattern: String,
        #[command(flatten)]
        patterns: PatternArgs,
        /// File of user ids (one per line) to restrict the sessions to.
        #[arg(long)]
        allow_users: Option<PathBuf>,
    },
    /// Sessions (or users) reaching each prefix of the stages.
    Funnel {
        #[arg(long = "stage", required = true)]
        stages: Vec<String>,
        #[command(flatten)]
        patterns: PatternArgs,
        /// Stages must be adjacent events.
        #[arg(long)]
        contiguous: bool,
        #[arg(long)]
        unique_users: bool,
        #[arg(long)]
        allow_users: Option<PathBuf>,
    },
    /// Event counts at each namespace roll-up level, split by login status.
    Rollup {
        #[arg(long)]
        level: Option<usize>,
    },
    /// Session totals by client and duration bucket.
    Stats {
        #[arg(long)]
        allow_users: Option<PathBuf>,
    },
    /// Train an n-gram model on the day's sessions.
    LmTrain {
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Cross-entropy and perplexity of a model on the day's sessions.
    LmEval {
        #[arg(long, default_value = "model.json")]
        model: PathBuf,
    },
    /// Ranked event bigrams.
    Collocations {
        #[arg(long, default_value_t = 5)]
        min_count: u64,
        #[arg(long, value_enum, default_value_t = MeasureArg::Pmi)]
        measure: MeasureArg,
        /// Pair events up to this many positions apart.
        #[arg(long, default_value_t = 1)]
        window: usize,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// Generate the event catalog, or search it with --search.
    Catalog {
        #[arg(long, default_value = "catalog")]
        out: PathBuf,
        /// Tab-separated `event_name<TAB>description` file.
        #[arg(long)]
        descriptions: Option<PathBuf>,
        #[arg(long)]
        search: Option<String>,
        #[command(flatten)]
        patterns: PatternArgs,
    },
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn ingest(cfg: &Config) -> Result<Ingested> {
    let ingested = scan_log_window(&cfg.window()?, cfg.mode)?;
    for r in &ingested.stats.rejected_samples {
        eprintln!("rejected {}:{}: {}", r.file.display(), r.line, r.reason);
    }
    Ok(ingested)
}

fn load_dictionary(cfg: &Config) -> Result<Dictionary> {
    Dictionary::load(&cfg.dictionary_path).with_context(|| format!("loading {}", cfg.dictionary_path.display()))
}

fn load_sessions(cfg: &Config, allow_users: Option<&Path>) -> Result<SessionSet> {
    let sessions = read_sequences(&cfg.sequences_root, cfg.date)?;
    match allow_users {
        None => Ok(sessions),
        Some(p) => {
            let path = cfg.path(p);
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let users: HashSet<u64> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(|l| l.parse().with_context(|| format!("bad user id {l:?}")))
                .collect::<Result<_>>()?;
            Ok(sessions.restrict_to_users(&users))
        }
    }
}

/// Runs one parsed command, writing results to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = Config::resolve(&cli.global)?;
    if let Some(n) = cfg.workers {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Gen {
            events,
            zipf,
            sessions,
            mean_length,
            total_events,
            users,
            logged_out_fraction,
            gzip,
        } => {
            let opts = GenOptions {
                event_types: events,
                zipf_exponent: zipf,
                sessions,
                mean_session_length: mean_length,
                total_events,
                users: users.unwrap_or((sessions / 3).max(1)),
                logged_out_fraction,
                date: cfg.date,
                seed: cfg.seed,
                ..GenOptions::default()
            };
            let corpus = generate(&opts)?;
            let day = LogWindow::day(&cfg.log_root, &cfg.category, cfg.date)?;
            let files = write_log_window(&corpus, &day, WriteOptions { gzip })?;
            writeln!(out, "events,files")?;
            writeln!(out, "{},{}", corpus.len(), files.len())?;
        }
        Command::Validate => {
            let stats = ingest(&cfg)?.stats;
            writeln!(out, "files,records_ok,records_rejected,warnings")?;
            writeln!(
                out,
                "{},{},{},{}",
                stats.files_read, stats.records_ok, stats.records_rejected, stats.warnings
            )?;
            if stats.records_rejected > 0 {
                bail!("{} records rejected", stats.records_rejected);
            }
        }
        Command::BuildDict => {
            let ingested = ingest(&cfg)?;
            let opts = BuildOptions {
                sample_size: cfg.sample_size,
                ..BuildOptions::default()
            };
            let dict = build_dictionary(&ingested.events, cfg.date, &opts)?;
            if let Some(dir) = cfg.dictionary_path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            dict.save(&cfg.dictionary_path)?;
            writeln!(out, "dictionary_id,entries,events")?;
            writeln!(out, "{},{},{}", dict.id(), dict.len(), dict.total_count())?;
        }
        Command::Sessionize => {
            let ingested = ingest(&cfg)?;
            let dict = load_dictionary(&cfg)?;
            if dict.built_for() != cfg.date {
                eprintln!("warning: dictionary built for {} but sessionizing {}", dict.built_for(), cfg.date);
            }
            let output = sessionize(&ingested.events, &dict, cfg.gap_seconds)?;
            if output.unknown_events > 0 {
                eprintln!(
                    "warning: skipped {} events with names missing from the dictionary: {}",
                    output.unknown_events,
                    output.unknown_names.join(" ")
                );
            }
            let dict_ref = cfg.dictionary_path.to_string_lossy();
            write_sequences(&cfg.sequences_root, cfg.date, &output.sessions, &dict_ref)?;
            writeln!(out, "sessions,events,skipped")?;
            writeln!(
                out,
                "{},{},{}",
                output.sessions.records.len(),
                output.sessions.total_events(),
                output.unknown_events
            )?;
        }
        Command::Count {
            pattern,
            patterns,
            allow_users,
        } => {
            let dict = load_dictionary(&cfg)?;
            let sessions = load_sessions(&cfg, allow_users.as_deref())?;
            let class = expand_pattern(&dict, &patterns.compile(&pattern)?);
            let total = count_events(&sessions, &class, CountMode::Total)?;
            let in_sessions = count_events(&sessions, &class, CountMode::Sessions)?;
            writeln!(out, "pattern,events,sessions")?;
            writeln!(out, "{},{total},{in_sessions}", csv_field(&pattern))?;
        }
        Command::Funnel {
            stages,
            patterns,
            contiguous,
            unique_users,
            allow_users,
        } => {
            let dict = load_dictionary(&cfg)?;
            let sessions = load_sessions(&cfg, allow_users.as_deref())?;
            let classes: Vec<SymbolClass> = stages
                .iter()
                .map(|s| Ok(expand_pattern(&dict, &patterns.compile(s)?)))
                .collect::<Result<_>>()?;
            let mode = if contiguous { FunnelMode::Contiguous } else { FunnelMode::InOrder };
            let result = if unique_users {
                funnel_unique_users(&sessions, &classes, mode)?
            } else {
                funnel(&sessions, &classes, mode)?
            };
            for (i, n) in result.stage_counts.iter().enumerate() {
                writeln!(out, "({i}, {n})")?;
            }
        }
        Command::Rollup { level } => {
            if level.is_some_and(|l| l > 5) {
                bail!("--level must be between 0 and 5");
            }
            let ingested = ingest(&cfg)?;
            writeln!(out, "level,client,page,section,component,element,action,logged_in,logged_out,count")?;
            for table in rollup(&ingested.events) {
                if level.is_some_and(|l| l != table.level) {
                    continue;
                }
                for (key, row) in &table.rows {
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        table.level,
                        key.fields().join(","),
                        row.logged_in,
                        row.logged_out,
                        row.count()
                    )?;
                }
            }
        }
        Command::Stats { allow_users } => {
            let dict = load_dictionary(&cfg)?;
            let sessions = load_sessions(&cfg, allow_users.as_deref())?;
            let stats = summary_stats(&sessions, &dict, cfg.date)?;
            writeln!(out, "date,metric,key,value")?;
            writeln!(out, "{},sessions,total,{}", stats.date, stats.sessions_total)?;
            for (client, n) in &stats.sessions_by_client {
                writeln!(out, "{},client,{},{n}", stats.date, csv_field(client))?;
            }
            for b in DurationBucket::ALL {
                writeln!(out, "{},duration,{},{}", stats.date, csv_field(b.label()), stats.bucket(b))?;
            }
        }
        Command::LmTrain { order, out: model_path } => {
            let dict = load_dictionary(&cfg)?;
            let sessions = read_sequences(&cfg.sequences_root, cfg.date)?;
            let model = train_ngram(&sessions, &dict, order, cfg.k)?;
            let path = cfg.path(&model_path);
            model.save(&path)?;
            writeln!(out, "order,k,contexts,tokens")?;
            writeln!(out, "{order},{},{},{}", cfg.k, model.contexts().count(), model.total_tokens())?;
        }
        Command::LmEval { model } => {
            let path = cfg.path(&model);
            let model = NgramModel::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let sessions = read_sequences(&cfg.sequences_root, cfg.date)?;
            let h = model.cross_entropy(&sessions)?;
            writeln!(out, "order,k,cross_entropy_bits,perplexity")?;
            writeln!(out, "{},{},{h:.6},{:.6}", model.order(), model.k(), h.exp2())?;
        }
        Command::Collocations {
            min_count,
            measure,
            window,
            top,
        } => {
            let dict = load_dictionary(&cfg)?;
            let sessions = read_sequences(&cfg.sequences_root, cfg.date)?;
            if sessions.dictionary_id != dict.id() {
                bail!(crate::query::QueryError::DictionaryMismatch {
                    sessions: sessions.dictionary_id.clone(),
                    query: dict.id().to_owned(),
                });
            }
            let measure = match measure {
                MeasureArg::Pmi => Measure::Pmi,
                MeasureArg::G2 => Measure::G2,
            };
            writeln!(out, "first,second,c_xy,c_x,c_y,n,pmi,g2")?;
            for s in extract_collocations(&sessions, min_count, measure, window).iter().take(top) {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{:.6},{:.6}",
                    dict.decode(s.x)?,
                    dict.decode(s.y)?,
                    s.c_xy,
                    s.c_x,
                    s.c_y,
                    s.n,
                    s.pmi,
                    s.g2
                )?;
            }
        }
        Command::Catalog {
            out: dir,
            descriptions,
            search,
            patterns,
        } => {
            let dict = load_dictionary(&cfg)?;
            let descriptions = match descriptions {
                Some(p) => Descriptions::load(&cfg.path(&p))?,
                None => Descriptions::default(),
            };
            if let Some(pattern) = search {
                writeln!(out, "event_name,count,documented")?;
                for e in search_catalog(&dict, &patterns.compile(&pattern)?, &descriptions) {
                    writeln!(out, "{},{},{}", e.event_name, e.count, e.documented)?;
                }
            } else {
                let report = generate_catalog(&dict, &descriptions, &cfg.path(&dir))?;
                for name in &report.stale_descriptions {
                    eprintln!("warning: description for unknown event {name}");
                }
                writeln!(out, "entries,documented,stale_descriptions")?;
                writeln!(
                    out,
                    "{},{},{}",
                    report.entries,
                    report.documented,
                    report.stale_descriptions.len()
                )?;
            }
        }
    }
    Ok(())
}
