//! Static, browsable event catalog regenerated from each day's dictionary.
//!
//! Output is Markdown: `index.md` lists every event under its
//! client/page/section/component/element path, and `events/<slug>.md`
//! holds the count, raw samples and description of one event.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::dictionary::Dictionary;
use crate::event_model::{EventName, EventPattern, COMPONENTS};

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("descriptions line {line}: expected `event_name<TAB>description`")]
    MalformedDescription { line: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CatalogError + '_ {
    move |source| CatalogError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Developer-written descriptions keyed by event name.
///
/// File format: one `event_name<TAB>description` per line; blank lines and
/// lines starting with `#` are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Descriptions(pub BTreeMap<String, String>);

impl Descriptions {
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut map = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, desc) = line
                .split_once('\t')
                .ok_or(CatalogError::MalformedDescription { line: idx + 1 })?;
            map.insert(name.trim().to_owned(), desc.trim().to_owned());
        }
        Ok(Descriptions(map))
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        Self::parse(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str).filter(|d| !d.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub event_name: EventName,
    pub count: u64,
    pub code_point: char,
    pub samples: Vec<Value>,
    pub description: Option<String>,
    pub documented: bool,
}

/// Dictionary entries in rank order, joined with their descriptions.
pub fn catalog_entries(dict: &Dictionary, descriptions: &Descriptions) -> Vec<CatalogEntry> {
    dict.entries()
        .iter()
        .map(|e| {
            let description = descriptions.get(e.name.as_str()).map(str::to_owned);
            CatalogEntry {
                event_name: e.name.clone(),
                count: e.count,
                code_point: e.code_point,
                samples: e.samples.clone(),
                documented: description.is_some(),
                description,
            }
        })
        .collect()
}

/// Entries whose names match `pattern`, by descending count then name.
pub fn search_catalog(dict: &Dictionary, pattern: &EventPattern, descriptions: &Descriptions) -> Vec<CatalogEntry> {
    let mut hits: Vec<CatalogEntry> = catalog_entries(dict, descriptions)
        .into_iter()
        .filter(|e| pattern.matches(&e.event_name))
        .collect();
    hits.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.event_name.cmp(&b.event_name)));
    hits
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogReport {
    pub entries: usize,
    pub documented: usize,
    /// Described names that are not in the dictionary.
    pub stale_descriptions: Vec<String>,
    pub index: PathBuf,
    pub pages: Vec<PathBuf>,
}

impl CatalogReport {
    pub fn coverage(&self) -> String {
        format!("{}/{}", self.documented, self.entries)
    }
}

/// File name of an event's page. Colons cannot appear in components, so the
/// mapping is injective.
pub fn page_slug(name: &EventName) -> String {
    format!("{}.md", name.as_str().replace(':', "."))
}

#[derive(Default)]
struct Tree<'a> {
    children: BTreeMap<&'a str, Tree<'a>>,
    leaf: Option<&'a CatalogEntry>,
}

fn show(component: &str) -> &str {
    if component.is_empty() {
        "(empty)"
    } else {
        component
    }
}

fn render_tree(out: &mut String, tree: &Tree<'_>, depth: usize) {
    for (label, node) in &tree.children {
        let indent = "  ".repeat(depth);
        match node.leaf {
            Some(e) => {
                let status = if e.documented { "" } else { " _undocumented_" };
                let _ = writeln!(
                    out,
                    "{indent}- [{}](events/{}) ({}){status}",
                    show(label),
                    page_slug(&e.event_name),
                    e.count
                );
            }
            None => {
                let _ = writeln!(out, "{indent}- **{}** _{}_", show(label), COMPONENTS[depth]);
                render_tree(out, node, depth + 1);
            }
        }
    }
}

fn render_index(dict: &Dictionary, entries: &[CatalogEntry], documented: usize, stale: &[String]) -> String {
    let mut root = Tree::default();
    for e in entries {
        let mut node = &mut root;
        for part in e.event_name.components() {
            node = node.children.entry(part).or_default();
        }
        node.leaf = Some(e);
    }
    let mut out = String::new();
    let _ = writeln!(out, "# Client event catalog\n");
    let _ = writeln!(out, "Dictionary `{}`, built for {}.\n", dict.id(), dict.built_for());
    let _ = writeln!(
        out,
        "Coverage: {documented}/{} events documented, {} events logged.\n",
        entries.len(),
        dict.total_count()
    );
    if !stale.is_empty() {
        let _ = writeln!(out, "Descriptions for events not seen this day: {}.\n", stale.join(", "));
    }
    let _ = writeln!(out, "## Events by namespace\n");
    render_tree(&mut out, &root, 0);
    out
}

fn render_page(e: &CatalogEntry) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# `{}`\n", e.event_name);
    let _ = writeln!(out, "| component | value |\n|---|---|");
    for (label, value) in COMPONENTS.iter().zip(e.event_name.components()) {
        let _ = writeln!(out, "| {label} | {} |", show(value));
    }
    let _ = writeln!(out, "\nCount: {}  ", e.count);
    let _ = writeln!(out, "Code point: U+{:04X}\n", u32::from(e.code_point));
    let _ = writeln!(out, "## Description\n");
    match &e.description {
        Some(d) => {
            let _ = writeln!(out, "{d}\n");
        }
        None => {
            let _ = writeln!(out, "_undocumented_\n");
        }
    }
    let _ = writeln!(out, "## Samples\n");
    if e.samples.is_empty() {
        let _ = writeln!(out, "_none retained_");
    }
    for s in &e.samples {
        let pretty = serde_json::to_string_pretty(s).expect("samples are JSON");
        let _ = writeln!(out, "```json\n{pretty}\n```\n");
    }
    out
}

/// Writes the catalog under `out`, replacing any pages from a previous build.
pub fn generate_catalog(dict: &Dictionary, descriptions: &Descriptions, out: &Path) -> Result<CatalogReport, CatalogError> {
    let entries = catalog_entries(dict, descriptions);
    let documented = entries.iter().filter(|e| e.documented).count();
    let stale: Vec<String> = descriptions
        .0
        .keys()
        .filter(|name| EventName::parse(name).ok().and_then(|n| dict.entry(&n)).is_none())
        .cloned()
        .collect();

    let events_dir = out.join("events");
    if events_dir.is_dir() {
        for old in fs::read_dir(&events_dir).map_err(io_err(&events_dir))? {
            let path = old.map_err(io_err(&events_dir))?.path();
            if path.extension().is_some_and(|x| x == "md") {
                fs::remove_file(&path).map_err(io_err(&path))?;
            }
        }
    }
    fs::create_dir_all(&events_dir).map_err(io_err(&events_dir))?;

    let mut pages = Vec::with_capacity(entries.len());
    for e in &entries {
        let path = events_dir.join(page_slug(&e.event_name));
        fs::write(&path, render_page(e)).map_err(io_err(&path))?;
        pages.push(path);
    }
    let index = out.join("index.md");
    fs::write(&index, render_index(dict, &entries, documented, &stale)).map_err(io_err(&index))?;

    Ok(CatalogReport {
        entries: entries.len(),
        documented,
        stale_descriptions: stale,
        index,
        pages,
    })
}
