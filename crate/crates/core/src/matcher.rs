//! Coverage of gold nuggets by a response, either nugget-to-nugget through
//! an entailment model or nugget-to-response through an LLM judge (or an
//! entailment model with the whole response as premise).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{NuggetSet, Response};
use crate::gateway::{EntailmentQuery, Gateway, GatewayError, LlmRequest};
use crate::prompts;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("extracted nuggets belong to turn `{extracted}` but gold nuggets to `{gold}`")]
    TurnMismatch { extracted: String, gold: String },
    #[error("response text is empty")]
    EmptyResponse,
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("unparseable judge reply for nugget `{nugget_id}`: `{reply}`")]
    Unparseable { nugget_id: String, reply: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    Ntn,
    Ntr,
    NtrNli,
}

/// What to do with a judge reply that is neither yes nor no.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ParseFailurePolicy {
    #[default]
    TreatAsNo,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchMatrix {
    pub mode: MatchMode,
    pub turn_id: String,
    /// Empty in the response-level modes.
    pub extracted_ids: Vec<String>,
    pub gold_ids: Vec<String>,
    /// `decisions[i][j]` for extracted `i` and gold `j` (nugget-to-nugget),
    /// or a single row over gold nuggets (response-level modes).
    pub decisions: Vec<Vec<bool>>,
    pub parse_failures: Vec<String>,
}

impl MatchMatrix {
    fn gold_column_any(&self, j: usize) -> bool {
        self.decisions.iter().any(|row| row[j])
    }

    pub fn covered_gold(&self) -> BTreeSet<&str> {
        (0..self.gold_ids.len()).filter(|&j| self.gold_column_any(j)).map(|j| self.gold_ids[j].as_str()).collect()
    }

    /// `None` in the response-level modes.
    pub fn covering_extracted(&self) -> Option<BTreeSet<&str>> {
        (self.mode == MatchMode::Ntn).then(|| {
            self.extracted_ids
                .iter()
                .zip(&self.decisions)
                .filter(|(_, row)| row.iter().any(|&d| d))
                .map(|(id, _)| id.as_str())
                .collect()
        })
    }

    pub fn gold_decision(&self, j: usize) -> bool {
        self.gold_column_any(j)
    }
}

/// `yes` or `no` from the first whitespace-delimited token, ignoring case
/// and punctuation.
pub fn parse_yes_no(reply: &str) -> Option<bool> {
    let token = reply.split_whitespace().next()?;
    let token: String = token.chars().filter(|c| !c.is_ascii_punctuation()).collect::<String>().to_lowercase();
    match token.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// A pair decides 1 iff the extracted nugget (premise) entails the gold
/// nugget (hypothesis). Contradiction counts as 0.
pub fn match_ntn(gateway: &Gateway, extracted: &NuggetSet, gold: &NuggetSet) -> Result<MatchMatrix, MatchError> {
    if extracted.turn_id != gold.turn_id {
        return Err(MatchError::TurnMismatch { extracted: extracted.turn_id.clone(), gold: gold.turn_id.clone() });
    }
    let pairs: Vec<EntailmentQuery> = extracted
        .iter()
        .flat_map(|p| gold.iter().map(move |g| EntailmentQuery::new(&p.text, &g.text)))
        .collect();
    let verdicts = gateway.fan_out(&pairs, |q| gateway.entail(q));
    let mut flat = Vec::with_capacity(verdicts.len());
    for v in verdicts {
        flat.push(v?.entails());
    }
    let width = gold.len();
    let decisions = if width == 0 {
        vec![Vec::new(); extracted.len()]
    } else {
        flat.chunks(width).map(<[bool]>::to_vec).collect()
    };
    Ok(MatchMatrix {
        mode: MatchMode::Ntn,
        turn_id: gold.turn_id.clone(),
        extracted_ids: extracted.iter().map(|n| n.nugget_id.clone()).collect(),
        gold_ids: gold.iter().map(|n| n.nugget_id.clone()).collect(),
        decisions,
        parse_failures: Vec::new(),
    })
}

/// One judge call per gold nugget.
pub fn match_ntr(
    gateway: &Gateway,
    response: &Response,
    gold: &NuggetSet,
    policy: ParseFailurePolicy,
) -> Result<MatchMatrix, MatchError> {
    if response.text.trim().is_empty() {
        return Err(MatchError::EmptyResponse);
    }
    let requests: Vec<LlmRequest> =
        gold.iter().map(|g| LlmRequest::user(prompts::ntr_prompt(&g.text, &response.text))).collect();
    let replies = gateway.fan_out(&requests, |r| gateway.complete(r));
    let mut row = Vec::with_capacity(gold.len());
    let mut parse_failures = Vec::new();
    for (g, reply) in gold.iter().zip(replies) {
        let reply = reply?;
        match parse_yes_no(&reply) {
            Some(d) => row.push(d),
            None => {
                if policy == ParseFailurePolicy::Abort {
                    return Err(MatchError::Unparseable { nugget_id: g.nugget_id.clone(), reply });
                }
                log::warn!("turn {}: unparseable judge reply for {}: `{reply}`", gold.turn_id, g.nugget_id);
                parse_failures.push(g.nugget_id.clone());
                row.push(false);
            }
        }
    }
    Ok(response_matrix(MatchMode::Ntr, gold, row, parse_failures))
}

/// Per gold nugget: does the whole response entail it?
pub fn match_ntr_nli(gateway: &Gateway, response: &Response, gold: &NuggetSet) -> Result<MatchMatrix, MatchError> {
    if response.text.trim().is_empty() {
        return Err(MatchError::EmptyResponse);
    }
    let queries: Vec<EntailmentQuery> = gold.iter().map(|g| EntailmentQuery::new(&response.text, &g.text)).collect();
    let mut row = Vec::with_capacity(gold.len());
    for v in gateway.fan_out(&queries, |q| gateway.entail(q)) {
        row.push(v?.entails());
    }
    Ok(response_matrix(MatchMode::NtrNli, gold, row, Vec::new()))
}

fn response_matrix(mode: MatchMode, gold: &NuggetSet, row: Vec<bool>, parse_failures: Vec<String>) -> MatchMatrix {
    MatchMatrix {
        mode,
        turn_id: gold.turn_id.clone(),
        extracted_ids: Vec::new(),
        gold_ids: gold.iter().map(|n| n.nugget_id.clone()).collect(),
        decisions: vec![row],
        parse_failures,
    }
}
