//! Classic TREC run lines (`qid Q0 docid rank score tag`) and qrels lines
//! (`qid 0 docid grade`).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{CorpusError, Qrels, RankedPassage, Result, RetrievalRun, RunCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Empty inputs are errors.
    #[default]
    Strict,
    Lenient,
}

pub fn parse_trec_run(input: &str, mode: ParseMode) -> Result<RetrievalRun> {
    let mut run_tag: Option<String> = None;
    let mut rankings: BTreeMap<String, Vec<RankedPassage>> = BTreeMap::new();
    let mut seen: BTreeMap<String, std::collections::BTreeSet<String>> = BTreeMap::new();

    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        let [qid, q0, docid, rank, score, tag] = fields[..] else {
            return Err(CorpusError::Malformed {
                line,
                reason: format!("expected 6 fields, found {}", fields.len()),
            });
        };
        if q0 != "Q0" {
            return Err(CorpusError::Malformed { line, reason: format!("second field must be `Q0`, found `{q0}`") });
        }
        let rank: u32 = rank
            .parse()
            .map_err(|_| CorpusError::Malformed { line, reason: format!("rank `{rank}` is not a non-negative integer") })?;
        let score: f64 = match score.parse::<f64>() {
            Ok(s) if s.is_finite() => s,
            _ => {
                return Err(CorpusError::Malformed { line, reason: format!("score `{score}` is not a finite number") })
            }
        };
        match &run_tag {
            None => run_tag = Some(tag.to_string()),
            Some(expected) if expected != tag => {
                return Err(CorpusError::InconsistentRunTag { line, expected: expected.clone(), found: tag.to_string() })
            }
            Some(_) => {}
        }
        if !seen.entry(qid.to_string()).or_default().insert(docid.to_string()) {
            return Err(CorpusError::DuplicateEntry { line, turn_id: qid.to_string(), passage_id: docid.to_string() });
        }
        rankings
            .entry(qid.to_string())
            .or_default()
            .push(RankedPassage { passage_id: docid.to_string(), score, rank });
    }

    if run_tag.is_none() && mode == ParseMode::Strict {
        return Err(CorpusError::EmptyRun);
    }
    let mut run = RetrievalRun { run_tag: run_tag.unwrap_or_default(), category: RunCategory::default(), rankings };
    run.sort_rankings();
    Ok(run)
}

pub fn write_trec_run(run: &RetrievalRun) -> String {
    let mut out = String::new();
    for (qid, ranking) in &run.rankings {
        for p in ranking {
            let _ = writeln!(out, "{qid} Q0 {} {} {} {}", p.passage_id, p.rank, p.score, run.run_tag);
        }
    }
    out
}

pub fn parse_qrels(input: &str) -> Result<Qrels> {
    let mut qrels = Qrels::default();
    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        let [qid, _, docid, grade] = fields[..] else {
            return Err(CorpusError::Malformed {
                line,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        };
        let grade: i64 = grade
            .parse()
            .map_err(|_| CorpusError::Malformed { line, reason: format!("grade `{grade}` is not an integer") })?;
        if !(0..=4).contains(&grade) {
            return Err(CorpusError::GradeOutOfRange { line, grade });
        }
        let grade = grade as u8;
        if !qrels.insert(qid, docid, grade) {
            let first = qrels.grade(qid, docid).unwrap_or_default();
            return Err(CorpusError::ConflictingGrade {
                line,
                turn_id: qid.to_string(),
                passage_id: docid.to_string(),
                first,
                second: grade,
            });
        }
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &Qrels) -> String {
    let mut out = String::new();
    for (qid, judged) in &qrels.judgments {
        for (docid, grade) in judged {
            let _ = writeln!(out, "{qid} 0 {docid} {grade}");
        }
    }
    out
}
