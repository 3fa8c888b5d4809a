//! Assessment pools: every passage a run ranks in its top `k_guaranteed`,
//! plus passages at ranks up to `k_max` that pass a relevance filter.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{PassageStore, Qrels, RetrievalRun, Topics};
use crate::gateway::{Gateway, GatewayError, LlmRequest};
use crate::prompts;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("k_guaranteed ({0}) exceeds k_max ({1})")]
    BadDepths(usize, usize),
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("no grade in judge reply `{0}`")]
    UnparseableGrade(String),
    #[error("turn `{0}`: no query text")]
    MissingQuery(String),
    #[error("no text for passage `{0}`")]
    MissingPassage(String),
    #[error("no canned grade for ({0}, {1})")]
    NoCannedGrade(String, String),
}

pub type Result<T> = std::result::Result<T, PoolError>;

/// Decides whether a deeper-ranked passage joins the pool.
pub trait RelevanceFilter: Sync {
    fn accept(&self, turn_id: &str, passage_id: &str) -> Result<bool>;
}

/// Returns a raw grade that may fall outside 0..=4.
pub trait RelevanceJudge: Sync {
    fn grade(&self, turn_id: &str, passage_id: &str) -> Result<i64>;
}

pub struct AcceptAll;
pub struct RejectAll;

impl RelevanceFilter for AcceptAll {
    fn accept(&self, _: &str, _: &str) -> Result<bool> {
        Ok(true)
    }
}

impl RelevanceFilter for RejectAll {
    fn accept(&self, _: &str, _: &str) -> Result<bool> {
        Ok(false)
    }
}

pub struct FnFilter<F>(pub F);

impl<F: Fn(&str, &str) -> Result<bool> + Sync> RelevanceFilter for FnFilter<F> {
    fn accept(&self, turn_id: &str, passage_id: &str) -> Result<bool> {
        (self.0)(turn_id, passage_id)
    }
}

/// Accepts a passage when the judge grades it at least `min_grade`.
pub struct GradeThresholdFilter<J> {
    pub judge: J,
    pub min_grade: i64,
}

impl<J: RelevanceJudge> RelevanceFilter for GradeThresholdFilter<J> {
    fn accept(&self, turn_id: &str, passage_id: &str) -> Result<bool> {
        Ok(self.judge.grade(turn_id, passage_id)? >= self.min_grade)
    }
}

/// Fixed grades per `(turn, passage)`; unknown pairs are an error.
#[derive(Debug, Clone, Default)]
pub struct CannedJudge(pub BTreeMap<(String, String), i64>);

impl RelevanceJudge for CannedJudge {
    fn grade(&self, turn_id: &str, passage_id: &str) -> Result<i64> {
        self.0
            .get(&(turn_id.to_string(), passage_id.to_string()))
            .copied()
            .ok_or_else(|| PoolError::NoCannedGrade(turn_id.into(), passage_id.into()))
    }
}

/// Grades with the relevance prompt through the gateway.
pub struct LlmJudge<'a> {
    pub gateway: &'a Gateway,
    pub topics: &'a Topics,
    pub passages: &'a PassageStore,
}

/// First run of ASCII digits in the reply.
pub fn parse_grade(reply: &str) -> Result<i64> {
    let digits: String = reply.chars().skip_while(|c| !c.is_ascii_digit()).take_while(char::is_ascii_digit).collect();
    digits.parse().map_err(|_| PoolError::UnparseableGrade(reply.to_string()))
}

impl RelevanceJudge for LlmJudge<'_> {
    fn grade(&self, turn_id: &str, passage_id: &str) -> Result<i64> {
        let query = self.topics.query_for(turn_id).ok_or_else(|| PoolError::MissingQuery(turn_id.into()))?;
        let passage = self.passages.get(passage_id).ok_or_else(|| PoolError::MissingPassage(passage_id.into()))?;
        let reply = self.gateway.complete(&LlmRequest::user(prompts::relevance_prompt(query, passage)))?;
        parse_grade(&reply)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Guaranteed,
    Filtered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub tier: Tier,
    /// `(run_tag, rank)` for every run that ranked the passage within `k_max`.
    pub contributors: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterFailure {
    pub turn_id: String,
    pub passage_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    pub k_guaranteed: usize,
    pub k_max: usize,
    pub turns: BTreeMap<String, BTreeMap<String, PoolEntry>>,
    pub filter_calls: usize,
    pub filter_failures: Vec<FilterFailure>,
}

impl Pool {
    pub fn passages(&self, turn_id: &str) -> BTreeSet<&str> {
        self.turns.get(turn_id).map(|m| m.keys().map(String::as_str).collect()).unwrap_or_default()
    }

    pub fn size(&self) -> usize {
        self.turns.values().map(BTreeMap::len).sum()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.turns.iter().flat_map(|(t, m)| m.keys().map(move |p| (t.as_str(), p.as_str())))
    }
}

pub fn build_pool(runs: &[RetrievalRun], k_guaranteed: usize, k_max: usize, filter: &dyn RelevanceFilter) -> Result<Pool> {
    if k_guaranteed > k_max {
        return Err(PoolError::BadDepths(k_guaranteed, k_max));
    }
    let mut contributors: BTreeMap<(String, String), Vec<(String, usize)>> = BTreeMap::new();
    for run in runs {
        for (turn_id, ranking) in &run.rankings {
            for (i, p) in ranking.iter().take(k_max).enumerate() {
                contributors
                    .entry((turn_id.clone(), p.passage_id.clone()))
                    .or_default()
                    .push((run.run_tag.clone(), i + 1));
            }
        }
    }
    let guaranteed = |c: &[(String, usize)]| c.iter().any(|&(_, r)| r <= k_guaranteed);
    let candidates: Vec<&(String, String)> =
        contributors.iter().filter(|(_, c)| !guaranteed(c)).map(|(k, _)| k).collect();
    let verdicts: Vec<Result<bool>> = candidates.par_iter().map(|(t, p)| filter.accept(t, p)).collect();
    let mut accepted = BTreeSet::new();
    let mut filter_failures = Vec::new();
    for (key, verdict) in candidates.iter().zip(verdicts) {
        match verdict {
            Ok(true) => {
                accepted.insert(*key);
            }
            Ok(false) => {}
            Err(e) => {
                log::warn!("filter failed on ({}, {}); excluded: {e}", key.0, key.1);
                filter_failures.push(FilterFailure { turn_id: key.0.clone(), passage_id: key.1.clone(), error: e.to_string() });
            }
        }
    }
    let mut pool = Pool { k_guaranteed, k_max, filter_calls: candidates.len(), filter_failures, ..Default::default() };
    for (key, c) in &contributors {
        let tier = if guaranteed(c) {
            Tier::Guaranteed
        } else if accepted.contains(key) {
            Tier::Filtered
        } else {
            continue;
        };
        pool.turns.entry(key.0.clone()).or_default().insert(key.1.clone(), PoolEntry { tier, contributors: c.clone() });
    }
    Ok(pool)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GradedPool {
    pub qrels: Qrels,
    /// Count of pairs per grade 0..=4.
    pub distribution: [usize; 5],
    pub clamped: Vec<(String, String, i64)>,
    pub failures: Vec<FilterFailure>,
}

/// Grades every pooled pair. Grades outside 0..=4 are clamped; pairs the
/// judge fails on are left out of the qrels.
pub fn grade_pool(pool: &Pool, judge: &dyn RelevanceJudge) -> GradedPool {
    let pairs: Vec<(&str, &str)> = pool.pairs().collect();
    let grades: Vec<Result<i64>> = pairs.par_iter().map(|(t, p)| judge.grade(t, p)).collect();
    let mut out = GradedPool::default();
    for ((t, p), g) in pairs.into_iter().zip(grades) {
        match g {
            Ok(raw) => {
                let grade = raw.clamp(0, 4);
                if grade != raw {
                    log::warn!("judge grade {raw} for ({t}, {p}) clamped to {grade}");
                    out.clamped.push((t.to_string(), p.to_string(), raw));
                }
                out.qrels.insert(t, p, grade as u8);
                out.distribution[grade as usize] += 1;
            }
            Err(e) => {
                log::warn!("judge failed on ({t}, {p}): {e}");
                out.failures.push(FilterFailure { turn_id: t.into(), passage_id: p.into(), error: e.to_string() });
            }
        }
    }
    out
}
