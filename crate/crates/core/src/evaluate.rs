//! End-to-end evaluation of a generation run: nugget matching against each
//! available gold variant, surface overlap with gold responses,
//! groundedness, and a leaderboard position against participant baselines.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{rank_submission, SystemRanking};
use crate::corpus::{
    parse_score_tables, ExternalScoreTable, GenerationRun, GoldResponse, NuggetSet, NuggetSource, PassageStore, Topics,
};
use crate::gateway::Gateway;
use crate::matcher::{match_ntn, match_ntr, match_ntr_nli, MatchMatrix, MatchMode, ParseFailurePolicy};
use crate::metrics::{self, groundedness, precision_ntn, recall, rouge, RougeVariant};
use crate::nuggetizer::Nuggetizer;
use crate::{RunMetrics, Score, TurnMetrics};

pub const BASELINE_GENERATION_TSV: &str = include_str!("../assets/participants_generation.tsv");
pub const BASELINE_RETRIEVAL_TSV: &str = include_str!("../assets/participants_retrieval.tsv");

pub fn baseline_generation() -> Vec<ExternalScoreTable> {
    parse_score_tables(BASELINE_GENERATION_TSV).expect("bundled table parses")
}

pub fn baseline_retrieval() -> Vec<ExternalScoreTable> {
    parse_score_tables(BASELINE_RETRIEVAL_TSV).expect("bundled table parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoldVariant {
    Human,
    HumanDedup,
    Llm,
    LlmDedup,
}

impl GoldVariant {
    pub const ALL: [GoldVariant; 4] = [GoldVariant::Human, GoldVariant::HumanDedup, GoldVariant::Llm, GoldVariant::LlmDedup];

    pub fn name(self) -> &'static str {
        match self {
            GoldVariant::Human => "human",
            GoldVariant::HumanDedup => "human-dedup",
            GoldVariant::Llm => "llm",
            GoldVariant::LlmDedup => "llm-dedup",
        }
    }

    /// Column family in the baseline tables, which do not distinguish
    /// deduplicated sets.
    pub fn baseline_family(self) -> &'static str {
        match self {
            GoldVariant::Human | GoldVariant::HumanDedup => "human",
            GoldVariant::Llm | GoldVariant::LlmDedup => "llm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Matching {
    #[default]
    Ntn,
    Ntr,
    NtrNli,
}

impl Matching {
    pub fn metric_names(self) -> &'static [&'static str] {
        match self {
            Matching::Ntn => &["precision_ntn", "recall_ntn"],
            Matching::Ntr | Matching::NtrNli => &["recall_ntr"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub matching: Matching,
    pub strict_spans: bool,
    pub groundedness_top_k: usize,
    pub parse_failures: ParseFailurePolicyName,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            matching: Matching::Ntn,
            strict_spans: false,
            groundedness_top_k: 3,
            parse_failures: ParseFailurePolicyName::TreatAsNo,
        }
    }
}

/// Serializable mirror of [`ParseFailurePolicy`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseFailurePolicyName {
    #[default]
    TreatAsNo,
    Abort,
}

impl From<ParseFailurePolicyName> for ParseFailurePolicy {
    fn from(p: ParseFailurePolicyName) -> Self {
        match p {
            ParseFailurePolicyName::TreatAsNo => ParseFailurePolicy::TreatAsNo,
            ParseFailurePolicyName::Abort => ParseFailurePolicy::Abort,
        }
    }
}

/// Everything an evaluation reads, already parsed and validated.
pub struct EvalInputs<'a> {
    pub topics: &'a Topics,
    pub run: &'a GenerationRun,
    pub gold: &'a BTreeMap<GoldVariant, BTreeMap<String, NuggetSet>>,
    pub gold_responses: Option<&'a BTreeMap<String, GoldResponse>>,
    pub passages: Option<&'a PassageStore>,
    pub baselines: &'a [ExternalScoreTable],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnError {
    pub module: String,
    pub turn_id: String,
    pub message: String,
    pub hint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub metric: String,
    pub baseline_column: String,
    pub score: Score,
    pub rank: Score,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NuggetLabel {
    pub nugget_id: String,
    pub text: String,
    pub matched: bool,
}

/// Labels for one turn under one gold variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnLabels {
    /// Nuggets extracted from the response (nugget-to-nugget mode only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extracted: Vec<NuggetLabel>,
    pub gold: Vec<NuggetLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub run_tag: String,
    pub matching: Matching,
    pub incomplete: bool,
    /// Metrics whose definition is this tool's own operationalization.
    pub operationalized: Vec<String>,
    /// Means per gold variant, plus an `overall` entry for surface and
    /// groundedness metrics.
    pub aggregate: BTreeMap<String, BTreeMap<String, Score>>,
    /// The same means over personal and non-personal turns.
    pub by_personalization: BTreeMap<String, BTreeMap<String, Score>>,
    pub per_turn: RunMetrics,
    pub leaderboard: Vec<LeaderboardEntry>,
    /// turn id -> gold variant -> labels.
    pub nugget_labels: BTreeMap<String, BTreeMap<String, TurnLabels>>,
    pub errors: Vec<TurnError>,
}

fn labels(ids: &[String], set: &NuggetSet, decide: impl Fn(usize) -> bool) -> Vec<NuggetLabel> {
    ids.iter()
        .zip(set.iter())
        .enumerate()
        .map(|(i, (id, n))| NuggetLabel { nugget_id: id.clone(), text: n.text.clone(), matched: decide(i) })
        .collect()
}

fn record(errors: &mut Vec<TurnError>, module: &str, turn_id: &str, message: impl ToString, hint: &str) {
    let message = message.to_string();
    log::error!("{module}: turn {turn_id}: {message}");
    errors.push(TurnError { module: module.into(), turn_id: turn_id.into(), message, hint: hint.into() });
}

const BACKEND_HINT: &str = "check backend endpoints and rerun; finished calls are served from the cache";

pub fn evaluate_generation(gateway: &Gateway, inputs: &EvalInputs<'_>, opts: &EvalOptions) -> GenerationReport {
    let mut errors = Vec::new();
    let mut turns = Vec::new();
    let mut nugget_labels: BTreeMap<String, BTreeMap<String, TurnLabels>> = BTreeMap::new();
    let nuggetizer = Nuggetizer::new(gateway).strict(opts.strict_spans).source(NuggetSource::Response);

    for (turn_id, response) in &inputs.run.responses {
        let in_gold = inputs.gold.values().any(|sets| sets.contains_key(turn_id));
        if !in_gold {
            log::warn!("turn {turn_id}: no gold nuggets in any variant; skipped");
            continue;
        }
        let mut tm = TurnMetrics::new(turn_id.clone());

        let extracted: Option<NuggetSet> = match opts.matching {
            Matching::Ntn => {
                let query = inputs.topics.query_for(turn_id);
                match query {
                    None => {
                        record(&mut errors, "nuggetizer", turn_id, "turn not in topics", "check the topics file");
                        None
                    }
                    Some(_) if response.text.trim().is_empty() => Some(NuggetSet::empty(turn_id.clone())),
                    Some(q) => match nuggetizer.extract(turn_id, &response.text, q) {
                        Ok(out) => Some(out.nuggets),
                        Err(e) => {
                            record(&mut errors, "nuggetizer", turn_id, e, BACKEND_HINT);
                            None
                        }
                    },
                }
            }
            _ => None,
        };

        for (variant, sets) in inputs.gold {
            let Some(gold) = sets.get(turn_id) else { continue };
            let v = variant.name();
            if gold.is_empty() {
                tm.flag(format!("{v}:empty-gold"));
                continue;
            }
            let matrix: Result<MatchMatrix, String> = match opts.matching {
                Matching::Ntn => match &extracted {
                    Some(p) => match_ntn(gateway, p, gold).map_err(|e| e.to_string()),
                    None => continue,
                },
                Matching::Ntr if response.text.trim().is_empty() => Ok(empty_response_matrix(MatchMode::Ntr, gold)),
                Matching::NtrNli if response.text.trim().is_empty() => {
                    Ok(empty_response_matrix(MatchMode::NtrNli, gold))
                }
                Matching::Ntr => match_ntr(gateway, response, gold, opts.parse_failures.into()).map_err(|e| e.to_string()),
                Matching::NtrNli => match_ntr_nli(gateway, response, gold).map_err(|e| e.to_string()),
            };
            let matrix = match matrix {
                Ok(m) => m,
                Err(e) => {
                    record(&mut errors, "matcher", turn_id, format!("{v}: {e}"), BACKEND_HINT);
                    continue;
                }
            };
            let r: Score = recall(&matrix).expect("gold set is non-empty");
            let entry = nugget_labels.entry(turn_id.clone()).or_default();
            match opts.matching {
                Matching::Ntn => {
                    let extracted = extracted.as_ref().expect("extraction succeeded");
                    let (p, empty) = precision_ntn::<Score>(&matrix);
                    tm.set(format!("{v}:precision_ntn"), p);
                    tm.set(format!("{v}:recall_ntn"), r);
                    if empty {
                        tm.flag("empty-extracted");
                    }
                    let covering = matrix.covering_extracted().unwrap_or_default();
                    entry.insert(
                        v.to_string(),
                        TurnLabels {
                            extracted: labels(&matrix.extracted_ids, extracted, |i| {
                                covering.contains(matrix.extracted_ids[i].as_str())
                            }),
                            gold: labels(&matrix.gold_ids, gold, |j| matrix.gold_decision(j)),
                        },
                    );
                }
                Matching::Ntr | Matching::NtrNli => {
                    tm.set(format!("{v}:recall_ntr"), r);
                    if !matrix.parse_failures.is_empty() {
                        tm.flag(format!("{v}:judge-parse-failures={}", matrix.parse_failures.len()));
                    }
                    entry.insert(
                        v.to_string(),
                        TurnLabels { extracted: Vec::new(), gold: labels(&matrix.gold_ids, gold, |j| matrix.gold_decision(j)) },
                    );
                }
            }
        }

        if let Some(gold_response) = inputs.gold_responses.and_then(|g| g.get(turn_id)) {
            for variant in RougeVariant::ALL {
                let s = rouge::<Score>(&response.text, &gold_response.text, variant);
                tm.set(format!("{}:f1", variant.name()), s.f1);
            }
        }

        if let Some(passages) = inputs.passages {
            match groundedness::<Score>(gateway, response, passages, opts.groundedness_top_k) {
                Ok(g) => {
                    tm.set("groundedness", g.value);
                    if g.no_provenance {
                        tm.flag("no-provenance");
                    }
                }
                Err(e) => record(&mut errors, "groundedness", turn_id, e, "check the passage file and entailment backend"),
            }
        }
        turns.push(tm);
    }

    let per_turn = RunMetrics::from_turns(inputs.run.run_tag.clone(), turns);
    let aggregate = group_by_variant(&per_turn.means);
    let by_personalization = personalization_split(&per_turn, inputs.topics);
    let leaderboard = leaderboard(&inputs.run.run_tag, &per_turn.means, inputs.baselines);
    GenerationReport {
        run_tag: inputs.run.run_tag.clone(),
        matching: opts.matching,
        incomplete: !errors.is_empty(),
        operationalized: if inputs.passages.is_some() { vec!["groundedness".into()] } else { Vec::new() },
        aggregate,
        by_personalization,
        per_turn,
        leaderboard,
        nugget_labels,
        errors,
    }
}

fn empty_response_matrix(mode: MatchMode, gold: &NuggetSet) -> MatchMatrix {
    MatchMatrix {
        mode,
        turn_id: gold.turn_id.clone(),
        extracted_ids: Vec::new(),
        gold_ids: gold.iter().map(|n| n.nugget_id.clone()).collect(),
        decisions: vec![vec![false; gold.len()]],
        parse_failures: Vec::new(),
    }
}

/// Splits `variant:metric` names; names without a known variant prefix go
/// under `overall`.
fn group_by_variant(means: &BTreeMap<String, Score>) -> BTreeMap<String, BTreeMap<String, Score>> {
    let mut out: BTreeMap<String, BTreeMap<String, Score>> = BTreeMap::new();
    for (name, &v) in means {
        let (group, metric) = match name.split_once(':') {
            Some((g, m)) if GoldVariant::parse(g).is_some() => (g.to_string(), m.to_string()),
            _ => ("overall".to_string(), name.clone()),
        };
        out.entry(group).or_default().insert(metric, v);
    }
    out
}

fn personalization_split(per_turn: &RunMetrics, topics: &Topics) -> BTreeMap<String, BTreeMap<String, Score>> {
    let mut out = BTreeMap::new();
    for (label, want) in [("personal", true), ("non-personal", false)] {
        let subset = per_turn
            .turns
            .values()
            .filter(|t| topics.turn(&t.turn_id).map(|x| x.personal) == Some(want))
            .cloned();
        let sub = RunMetrics::from_turns("", subset);
        if !sub.turns.is_empty() {
            out.insert(label.to_string(), sub.means);
        }
    }
    out
}

/// Positions the run among baseline runs for every metric with a matching
/// baseline column. A baseline entry with the same tag is replaced.
fn leaderboard(run_tag: &str, means: &BTreeMap<String, Score>, baselines: &[ExternalScoreTable]) -> Vec<LeaderboardEntry> {
    let mut out = Vec::new();
    for (metric, &score) in means {
        let column = match metric.split_once(':') {
            Some((g, m)) => match GoldVariant::parse(g) {
                Some(v) => format!("{}:{m}", v.baseline_family()),
                None => metric.clone(),
            },
            None => metric.clone(),
        };
        let Some(table) = baselines.iter().find(|t| t.metric_name == column) else { continue };
        let mut scores: BTreeMap<&str, Score> = table.scores.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        scores.insert(run_tag, score);
        let Ok(ranking) = SystemRanking::new(column.clone(), scores) else { continue };
        if let Ok((rank, total)) = rank_submission(run_tag, &ranking) {
            out.push(LeaderboardEntry { metric: metric.clone(), baseline_column: column, score, rank, total });
        }
    }
    out
}

/// Per-turn metrics as an aligned, tab-separated table.
pub fn per_turn_tsv(metrics: &RunMetrics) -> String {
    let names: Vec<&String> = {
        let set: std::collections::BTreeSet<&String> = metrics.turns.values().flat_map(|t| t.values.keys()).collect();
        set.into_iter().collect()
    };
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("turn_id".to_string()).chain(names.iter().map(|n| n.to_string())).collect()];
    for t in metrics.turns.values() {
        let mut row = vec![t.turn_id.clone()];
        for n in &names {
            row.push(t.values.get(*n).map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()));
        }
        rows.push(row);
    }
    let mut row = vec!["mean".to_string()];
    for n in &names {
        row.push(metrics.means.get(*n).map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()));
    }
    rows.push(row);
    align(&rows)
}

pub(crate) fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().enumerate().map(|(i, s)| format!("{s:<w$}", w = widths[i])).collect();
        let _ = writeln!(out, "{}", cells.join("\t").trim_end());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub scores: crate::RetrievalScores,
    pub leaderboard: Vec<LeaderboardEntry>,
}

pub fn retrieval_report(scores: crate::RetrievalScores, baselines: &[ExternalScoreTable]) -> RetrievalReport {
    let leaderboard = leaderboard(&scores.run_tag, &scores.means, baselines);
    RetrievalReport { scores, leaderboard }
}

pub fn retrieval_tsv(scores: &crate::RetrievalScores) -> String {
    let mut names: Vec<&String> = scores.means.keys().collect();
    names.sort();
    let mut rows = vec![std::iter::once("turn_id".to_string()).chain(names.iter().map(|n| n.to_string())).collect::<Vec<_>>()];
    for (turn, m) in &scores.per_turn {
        rows.push(
            std::iter::once(turn.clone())
                .chain(names.iter().map(|n| m.get(*n).map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())))
                .collect(),
        );
    }
    rows.push(
        std::iter::once("mean".to_string())
            .chain(names.iter().map(|n| format!("{:.4}", scores.means[*n])))
            .collect(),
    );
    align(&rows)
}

pub use metrics::RetrievalConfig;
