//! Nugget extraction: prompt an LLM for nuggets of a text given the
//! resolved user utterance, then keep only completion lines that are spans
//! of that text.
//!
//! Offsets are in characters (Unicode scalar values), not bytes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Nugget, NuggetSet, NuggetSource, PassageStore, Qrels, Topics};
use crate::gateway::{Gateway, GatewayError, LlmRequest};
use crate::prompts;

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("completion line is not a span of the source text: `{line}`")]
    NonSpan { line: String },
    #[error("turn `{turn_id}`: no text for passage `{passage_id}`")]
    MissingPassage { turn_id: String, passage_id: String },
    #[error("turn `{0}`: no resolved utterance available")]
    MissingQuery(String),
}

/// How a completion line was matched to the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepairStatus {
    Exact,
    Whitespace,
    CaseInsensitive,
    NoMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpanMatch {
    pub start: usize,
    pub end: usize,
    pub status: RepairStatus,
}

/// Character offsets of the first occurrence of `candidate` in `source`,
/// trying an exact match, then a whitespace-normalized one, then a
/// case-insensitive normalized one.
pub fn validate_span(candidate: &str, source: &str) -> Option<(usize, usize)> {
    locate_span(candidate, source).map(|m| (m.start, m.end))
}

pub fn locate_span(candidate: &str, source: &str) -> Option<SpanMatch> {
    if candidate.trim().is_empty() {
        return None;
    }
    if let Some(byte) = source.find(candidate) {
        let start = source[..byte].chars().count();
        let end = start + candidate.chars().count();
        return Some(SpanMatch { start, end, status: RepairStatus::Exact });
    }
    for (lowercase, status) in [(false, RepairStatus::Whitespace), (true, RepairStatus::CaseInsensitive)] {
        let (haystack, map) = normalize_with_map(source, lowercase);
        let (needle, _) = normalize_with_map(candidate, lowercase);
        if needle.is_empty() || needle.len() > haystack.len() {
            continue;
        }
        if let Some(i) = haystack.windows(needle.len()).position(|w| w == needle.as_slice()) {
            return Some(SpanMatch { start: map[i], end: map[i + needle.len() - 1] + 1, status });
        }
    }
    None
}

/// Whitespace-collapsed (optionally lowercased) characters of `s`, each
/// paired with the index of the source character it came from.
fn normalize_with_map(s: &str, lowercase: bool) -> (Vec<char>, Vec<usize>) {
    let mut out = Vec::with_capacity(s.len());
    let mut map = Vec::with_capacity(s.len());
    let mut pending_space: Option<usize> = None;
    for (i, c) in s.chars().enumerate() {
        if c.is_whitespace() {
            if !out.is_empty() && pending_space.is_none() {
                pending_space = Some(i);
            }
            continue;
        }
        if let Some(sp) = pending_space.take() {
            out.push(' ');
            map.push(sp);
        }
        if lowercase {
            for l in c.to_lowercase() {
                out.push(l);
                map.push(i);
            }
        } else {
            out.push(c);
            map.push(i);
        }
    }
    (out, map)
}

fn char_slice(s: &str, start: usize, end: usize) -> String {
    s.chars().skip(start).take(end - start).collect()
}

fn is_no_nugget(line: &str) -> bool {
    let t = line.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '.' || c.is_whitespace());
    t.eq_ignore_ascii_case(prompts::NO_NUGGET)
}

/// Drops a leading list marker such as `1.`, `2)`, `-`, `*` or `•`.
fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    for marker in ["-", "*", "•", "–"] {
        if let Some(rest) = line.strip_prefix(marker) {
            if rest.starts_with(char::is_whitespace) {
                return rest.trim_start();
            }
        }
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(after) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            if after.starts_with(char::is_whitespace) {
                return after.trim_start();
            }
        }
    }
    line
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractionOutcome {
    pub nuggets: NuggetSet,
    /// Lines that were not exact spans, with how they were handled.
    pub non_span_lines: Vec<(String, RepairStatus)>,
    pub no_nugget: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PassageFailure {
    pub turn_id: String,
    pub passage_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PoolExtraction {
    pub sets: BTreeMap<String, NuggetSet>,
    pub failures: Vec<PassageFailure>,
    pub dropped_lines: usize,
}

pub struct Nuggetizer<'g> {
    gateway: &'g Gateway,
    strict: bool,
    source: NuggetSource,
}

impl<'g> Nuggetizer<'g> {
    /// Lenient span handling; nuggets labelled as LLM-extracted.
    pub fn new(gateway: &'g Gateway) -> Self {
        Nuggetizer { gateway, strict: false, source: NuggetSource::Llm }
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn source(mut self, source: NuggetSource) -> Self {
        self.source = source;
        self
    }

    pub fn extract(&self, turn_id: &str, text: &str, resolved_utterance: &str) -> Result<ExtractionOutcome, ExtractionError> {
        if text.trim().is_empty() || resolved_utterance.trim().is_empty() {
            return Err(ExtractionError::InvalidInput("text and resolved utterance must be non-empty".into()));
        }
        let request = LlmRequest::user(prompts::extraction_prompt(resolved_utterance, text));
        let completion = self.gateway.complete(&request)?;
        self.parse_completion(turn_id, text, &completion)
    }

    /// Post-processing of a completion; deterministic and backend-free.
    pub fn parse_completion(&self, turn_id: &str, text: &str, completion: &str) -> Result<ExtractionOutcome, ExtractionError> {
        let lines: Vec<&str> = completion.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if lines.iter().any(|l| is_no_nugget(l)) {
            return Ok(ExtractionOutcome { nuggets: NuggetSet::empty(turn_id), non_span_lines: Vec::new(), no_nugget: true });
        }
        let mut nuggets = Vec::new();
        let mut seen = BTreeSet::new();
        let mut non_span_lines = Vec::new();
        for raw in lines {
            let line = strip_list_marker(raw);
            if line.is_empty() {
                continue;
            }
            let Some(m) = locate_span(line, text) else {
                if self.strict {
                    return Err(ExtractionError::NonSpan { line: raw.to_string() });
                }
                log::debug!("turn {turn_id}: dropping non-span line `{raw}`");
                non_span_lines.push((raw.to_string(), RepairStatus::NoMatch));
                continue;
            };
            if m.status != RepairStatus::Exact {
                non_span_lines.push((raw.to_string(), m.status));
            }
            let span_text = char_slice(text, m.start, m.end);
            if !seen.insert(span_text.clone()) {
                continue;
            }
            nuggets.push(Nugget {
                nugget_id: format!("{turn_id}:{}", nuggets.len()),
                turn_id: turn_id.to_string(),
                text: span_text,
                source_passage_id: None,
                source: self.source,
                char_span: Some((m.start, m.end)),
            });
        }
        let nuggets = NuggetSet { turn_id: turn_id.to_string(), nuggets, deduplicated: false };
        Ok(ExtractionOutcome { nuggets, non_span_lines, no_nugget: false })
    }

    /// Runs extraction over every judged passage with `grade >= min_grade`
    /// and merges the nuggets per turn. Backend failures are recorded per
    /// passage; missing passage texts or queries fail before any call.
    pub fn extract_for_pool(
        &self,
        qrels: &Qrels,
        passages: &PassageStore,
        topics: &Topics,
        min_grade: u8,
    ) -> Result<PoolExtraction, ExtractionError> {
        let mut jobs: Vec<(&str, &str, &str, &str)> = Vec::new();
        for (turn_id, judged) in &qrels.judgments {
            let relevant: Vec<&String> = judged.iter().filter(|(_, &g)| g >= min_grade).map(|(p, _)| p).collect();
            if relevant.is_empty() {
                continue;
            }
            let query = topics.query_for(turn_id).ok_or_else(|| ExtractionError::MissingQuery(turn_id.clone()))?;
            for passage_id in relevant {
                let text = passages.get(passage_id).ok_or_else(|| ExtractionError::MissingPassage {
                    turn_id: turn_id.clone(),
                    passage_id: passage_id.clone(),
                })?;
                jobs.push((turn_id, passage_id, text, query));
            }
        }

        let results = self.gateway.fan_out(&jobs, |&(turn_id, _, text, query)| self.extract(turn_id, text, query));

        let mut out = PoolExtraction::default();
        for ((turn_id, passage_id, _, _), result) in jobs.iter().zip(results) {
            let set = out.sets.entry(turn_id.to_string()).or_insert_with(|| NuggetSet::empty(*turn_id));
            match result {
                Ok(outcome) => {
                    out.dropped_lines +=
                        outcome.non_span_lines.iter().filter(|(_, s)| *s == RepairStatus::NoMatch).count();
                    for mut n in outcome.nuggets.nuggets {
                        n.nugget_id = format!("{turn_id}:{}", set.nuggets.len());
                        n.source_passage_id = Some(passage_id.to_string());
                        set.nuggets.push(n);
                    }
                }
                Err(e) => {
                    log::warn!("turn {turn_id}, passage {passage_id}: {e}");
                    out.failures.push(PassageFailure {
                        turn_id: turn_id.to_string(),
                        passage_id: passage_id.to_string(),
                        error: e.to_string(),
                    });
                }
            }
        }
        Ok(out)
    }
}
