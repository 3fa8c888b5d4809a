//! Tab-separated inputs: external per-run score tables and passage text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::{CorpusError, Result};

/// Per-run scores for one externally computed metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExternalScoreTable {
    pub metric_name: String,
    pub scores: BTreeMap<String, f64>,
}

impl ExternalScoreTable {
    pub fn check_resolvable<'a>(&self, known_runs: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let known: BTreeSet<&str> = known_runs.into_iter().collect();
        match self.scores.keys().find(|tag| !known.contains(tag.as_str())) {
            Some(tag) => Err(CorpusError::UnresolvedRunTag { metric: self.metric_name.clone(), run_tag: tag.clone() }),
            None => Ok(()),
        }
    }
}

/// Parses `run_tag<TAB>metric_a[<TAB>metric_b...]` with one header line.
/// Empty cells leave that run out of the corresponding table.
pub fn parse_score_tables(input: &str) -> Result<Vec<ExternalScoreTable>> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(CorpusError::Malformed { line: 1, reason: "missing header".into() });
    };
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    if columns.len() < 2 || columns[0] != "run_tag" {
        return Err(CorpusError::Malformed { line: 1, reason: "header must be `run_tag<TAB><metric>...`".into() });
    }
    let mut tables: Vec<ExternalScoreTable> = columns[1..]
        .iter()
        .map(|m| ExternalScoreTable { metric_name: m.to_string(), scores: BTreeMap::new() })
        .collect();
    for (idx, raw) in lines {
        let line = idx + 1;
        let cells: Vec<&str> = raw.split('\t').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(CorpusError::Malformed {
                line,
                reason: format!("expected {} columns, found {}", columns.len(), cells.len()),
            });
        }
        let tag = cells[0];
        for (table, cell) in tables.iter_mut().zip(&cells[1..]) {
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| CorpusError::Malformed { line, reason: format!("score `{cell}` is not a number") })?;
            if table.scores.insert(tag.to_string(), v).is_some() {
                return Err(CorpusError::Malformed { line, reason: format!("run `{tag}` listed twice") });
            }
        }
    }
    Ok(tables)
}

/// Single-metric form of [`parse_score_tables`].
pub fn parse_score_table(input: &str) -> Result<ExternalScoreTable> {
    let mut tables = parse_score_tables(input)?;
    if tables.len() != 1 {
        return Err(CorpusError::Malformed { line: 1, reason: format!("expected one metric column, found {}", tables.len()) });
    }
    Ok(tables.remove(0))
}

pub fn write_score_tables(tables: &[ExternalScoreTable]) -> String {
    let mut out = String::from("run_tag");
    for t in tables {
        out.push('\t');
        out.push_str(&t.metric_name);
    }
    out.push('\n');
    let tags: BTreeSet<&String> = tables.iter().flat_map(|t| t.scores.keys()).collect();
    for tag in tags {
        out.push_str(tag);
        for t in tables {
            out.push('\t');
            if let Some(v) = t.scores.get(tag) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

/// Passage id to passage text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PassageStore {
    passages: BTreeMap<String, String>,
}

impl PassageStore {
    pub fn get(&self, passage_id: &str) -> Option<&str> {
        self.passages.get(passage_id).map(String::as_str)
    }

    pub fn insert(&mut self, passage_id: impl Into<String>, text: impl Into<String>) {
        self.passages.insert(passage_id.into(), text.into());
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for PassageStore {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        PassageStore { passages: iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect() }
    }
}

/// Parses `passage_id<TAB>text` lines; the text is everything after the
/// first tab.
pub fn parse_passages(input: &str) -> Result<PassageStore> {
    let mut store = PassageStore::default();
    for (idx, raw) in input.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line = idx + 1;
        let Some((id, text)) = raw.split_once('\t') else {
            return Err(CorpusError::Malformed { line, reason: "expected `passage_id<TAB>text`".into() });
        };
        let id = id.trim();
        if id.is_empty() {
            return Err(CorpusError::Malformed { line, reason: "empty passage id".into() });
        }
        if store.passages.insert(id.to_string(), text.to_string()).is_some() {
            return Err(CorpusError::Malformed { line, reason: format!("passage `{id}` listed twice") });
        }
    }
    Ok(store)
}
