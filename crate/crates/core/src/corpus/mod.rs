//! Collection artifacts: topics, qrels, runs, nugget files, gold responses
//! and external score tables, with their parsers and serializers.
//!
//! Turn identifiers (`"<topic>-<turn>"`) are treated as opaque strings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod json;
mod tables;
mod topics;
mod trec;

pub use json::{
    parse_generation_run, parse_gold_responses, parse_nugget_file, validate_nugget_turns,
    write_generation_run, write_gold_responses, write_nugget_file,
};
pub use tables::{
    parse_passages, parse_score_table, parse_score_tables, write_score_tables, ExternalScoreTable,
    PassageStore,
};
pub use topics::{parse_topics, write_topics, CollectionStats, PtkbLabels, PtkbStatement, Topic, Topics, Turn};
pub use trec::{parse_qrels, parse_trec_run, write_qrels, write_trec_run, ParseMode};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: run tag `{found}` differs from `{expected}`")]
    InconsistentRunTag { line: usize, expected: String, found: String },
    #[error("line {line}: duplicate entry ({turn_id}, {passage_id})")]
    DuplicateEntry { line: usize, turn_id: String, passage_id: String },
    #[error("empty run")]
    EmptyRun,
    #[error("line {line}: grade {grade} outside 0-4")]
    GradeOutOfRange { line: usize, grade: i64 },
    #[error("line {line}: ({turn_id}, {passage_id}) judged {first} and {second}")]
    ConflictingGrade { line: usize, turn_id: String, passage_id: String, first: u8, second: u8 },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{context}: {reason}")]
    Invalid { context: String, reason: String },
    #[error("duplicate turn `{0}`")]
    DuplicateTurn(String),
    #[error("turn `{0}` has no rank-1 response")]
    NoPrimaryResponse(String),
    #[error("turn `{turn_id}`: nugget {index} has empty text")]
    EmptyNuggetText { turn_id: String, index: usize },
    #[error("turn `{turn_id}`: duplicate nugget id `{nugget_id}`")]
    DuplicateNuggetId { turn_id: String, nugget_id: String },
    #[error("unknown turn `{0}`")]
    UnknownTurn(String),
    #[error("score table `{metric}`: run `{run_tag}` is not among the loaded runs")]
    UnresolvedRunTag { metric: String, run_tag: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CorpusError {
    pub(crate) fn invalid(context: impl Into<String>, reason: impl Into<String>) -> Self {
        CorpusError::Invalid { context: context.into(), reason: reason.into() }
    }
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Reads a whole file as UTF-8.
pub fn read_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuggetSource {
    Human,
    Llm,
    Response,
}

/// A contiguous span of source text carrying one piece of information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nugget {
    pub nugget_id: String,
    pub turn_id: String,
    pub text: String,
    pub source_passage_id: Option<String>,
    pub source: NuggetSource,
    /// Character offsets `[start, end)` into the source text.
    pub char_span: Option<(usize, usize)>,
}

/// Gold or extracted nuggets for one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuggetSet {
    pub turn_id: String,
    pub nuggets: Vec<Nugget>,
    pub deduplicated: bool,
}

impl NuggetSet {
    pub fn empty(turn_id: impl Into<String>) -> Self {
        NuggetSet { turn_id: turn_id.into(), nuggets: Vec::new(), deduplicated: false }
    }

    /// Builds a set and checks the shared-turn and unique-id invariants.
    pub fn new(turn_id: impl Into<String>, nuggets: Vec<Nugget>) -> Result<Self> {
        let set = NuggetSet { turn_id: turn_id.into(), nuggets, deduplicated: false };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (index, n) in self.nuggets.iter().enumerate() {
            if n.turn_id != self.turn_id {
                return Err(CorpusError::invalid(
                    format!("nugget `{}`", n.nugget_id),
                    format!("belongs to turn `{}`, set is for `{}`", n.turn_id, self.turn_id),
                ));
            }
            if n.text.trim().is_empty() {
                return Err(CorpusError::EmptyNuggetText { turn_id: self.turn_id.clone(), index });
            }
            if !seen.insert(n.nugget_id.as_str()) {
                return Err(CorpusError::DuplicateNuggetId {
                    turn_id: self.turn_id.clone(),
                    nugget_id: n.nugget_id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nuggets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nuggets.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Nugget> {
        self.nuggets.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunCategory {
    #[default]
    Automatic,
    Manual,
    GenerationOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPassage {
    pub passage_id: String,
    pub score: f64,
    /// Rank as submitted; used as the first tie-breaker on equal scores.
    pub rank: u32,
}

/// Ranked passages per turn for one system. Rankings are kept sorted by
/// score descending, then submitted rank, then passage id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRun {
    pub run_tag: String,
    pub category: RunCategory,
    pub rankings: BTreeMap<String, Vec<RankedPassage>>,
}

impl RetrievalRun {
    pub fn ranking(&self, turn_id: &str) -> &[RankedPassage] {
        self.rankings.get(turn_id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Passage ids for a turn in evaluation order.
    pub fn passage_ids(&self, turn_id: &str) -> impl Iterator<Item = &str> {
        self.ranking(turn_id).iter().map(|p| p.passage_id.as_str())
    }

    pub fn with_category(mut self, category: RunCategory) -> Self {
        self.category = category;
        self
    }

    pub(crate) fn sort_rankings(&mut self) {
        for ranking in self.rankings.values_mut() {
            ranking.sort_by(|a, b| {
                b.score
                    .total_cmp(&a.score)
                    .then(a.rank.cmp(&b.rank))
                    .then_with(|| a.passage_id.cmp(&b.passage_id))
            });
        }
    }
}

/// A generated answer with the passages it cites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub text: String,
    #[serde(default)]
    pub passage_provenance: Vec<String>,
}

impl Response {
    pub fn new(text: impl Into<String>) -> Self {
        Response { text: text.into(), passage_provenance: Vec::new() }
    }

    pub fn length_words(&self) -> usize {
        crate::text::word_count(&self.text)
    }
}

/// Generated responses of one system. Only the rank-1 response per turn is
/// evaluated; lower-ranked ones are kept in `alternates`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRun {
    pub run_tag: String,
    pub responses: BTreeMap<String, Response>,
    pub alternates: BTreeMap<String, Vec<(u32, Response)>>,
}

/// Graded judgments, grade in 0..=4.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Qrels {
    pub judgments: BTreeMap<String, BTreeMap<String, u8>>,
}

impl Qrels {
    pub fn grade(&self, turn_id: &str, passage_id: &str) -> Option<u8> {
        self.judgments.get(turn_id)?.get(passage_id).copied()
    }

    pub fn judged(&self, turn_id: &str) -> Option<&BTreeMap<String, u8>> {
        self.judgments.get(turn_id)
    }

    pub fn turns(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn num_relevant(&self, turn_id: &str, threshold: u8) -> usize {
        self.judged(turn_id).map_or(0, |j| j.values().filter(|&&g| g >= threshold).count())
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts a judgment; `false` if it conflicts with an existing grade.
    pub fn insert(&mut self, turn_id: &str, passage_id: &str, grade: u8) -> bool {
        let slot = self.judgments.entry(turn_id.to_string()).or_default();
        match slot.get(passage_id) {
            Some(&g) => g == grade,
            None => {
                slot.insert(passage_id.to_string(), grade);
                true
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldResponse {
    pub turn_id: String,
    pub text: String,
    #[serde(default)]
    pub supporting_passage_ids: Vec<String>,
}
