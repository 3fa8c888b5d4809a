//! JSON formats: generation runs, nugget files and gold responses.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    CorpusError, GenerationRun, GoldResponse, Nugget, NuggetSet, NuggetSource, Response, Result, Topics,
};

#[derive(Deserialize, Serialize)]
struct RawGenerationRun {
    run_tag: String,
    turns: Vec<RawGenerationTurn>,
}

#[derive(Deserialize, Serialize)]
struct RawGenerationTurn {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    turn_id: Option<String>,
    responses: Vec<RawResponse>,
}

#[derive(Deserialize, Serialize)]
struct RawResponse {
    rank: u32,
    text: String,
    #[serde(default)]
    passage_provenance: Vec<String>,
}

/// Parses `{"run_tag": .., "turns": [{"turn_id": .., "responses": [{"rank", "text", "passage_provenance"}]}]}`.
pub fn parse_generation_run(input: &str) -> Result<GenerationRun> {
    let raw: RawGenerationRun = serde_json::from_str(input)?;
    let mut responses = BTreeMap::new();
    let mut alternates = BTreeMap::new();
    for (index, entry) in raw.turns.into_iter().enumerate() {
        let turn_id = entry
            .turn_id
            .filter(|t| !t.is_empty())
            .ok_or_else(|| CorpusError::invalid(format!("turns[{index}]"), "missing turn_id"))?;
        if responses.contains_key(&turn_id) {
            return Err(CorpusError::DuplicateTurn(turn_id));
        }
        let mut ranked: Vec<(u32, Response)> = entry
            .responses
            .into_iter()
            .map(|r| (r.rank, Response { text: r.text, passage_provenance: r.passage_provenance }))
            .collect();
        ranked.sort_by_key(|(rank, _)| *rank);
        let Some(pos) = ranked.iter().position(|(rank, _)| *rank == 1) else {
            return Err(CorpusError::NoPrimaryResponse(turn_id));
        };
        let (_, primary) = ranked.remove(pos);
        responses.insert(turn_id.clone(), primary);
        if !ranked.is_empty() {
            alternates.insert(turn_id, ranked);
        }
    }
    Ok(GenerationRun { run_tag: raw.run_tag, responses, alternates })
}

pub fn write_generation_run(run: &GenerationRun) -> String {
    let turns = run
        .responses
        .iter()
        .map(|(turn_id, primary)| {
            let mut responses = vec![RawResponse {
                rank: 1,
                text: primary.text.clone(),
                passage_provenance: primary.passage_provenance.clone(),
            }];
            for (rank, r) in run.alternates.get(turn_id).into_iter().flatten() {
                responses.push(RawResponse {
                    rank: *rank,
                    text: r.text.clone(),
                    passage_provenance: r.passage_provenance.clone(),
                });
            }
            RawGenerationTurn { turn_id: Some(turn_id.clone()), responses }
        })
        .collect();
    let raw = RawGenerationRun { run_tag: run.run_tag.clone(), turns };
    serde_json::to_string_pretty(&raw).expect("generation run serializes")
}

#[derive(Deserialize, Serialize)]
struct RawNugget {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nugget_id: Option<String>,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_passage_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    char_span: Option<(usize, usize)>,
}

/// Parses an object keyed by turn id, each value an array of
/// `{nugget_id?, text, source_passage_id?, char_span?}`. Missing ids become
/// `"<turn_id>:<index>"`; `source` labels every nugget.
pub fn parse_nugget_file(input: &str, source: NuggetSource) -> Result<BTreeMap<String, NuggetSet>> {
    let raw: BTreeMap<String, Vec<RawNugget>> = serde_json::from_str(input)?;
    raw.into_iter()
        .map(|(turn_id, entries)| {
            let nuggets = entries
                .into_iter()
                .enumerate()
                .map(|(index, r)| {
                    if r.text.trim().is_empty() {
                        return Err(CorpusError::EmptyNuggetText { turn_id: turn_id.clone(), index });
                    }
                    Ok(Nugget {
                        nugget_id: r.nugget_id.unwrap_or_else(|| format!("{turn_id}:{index}")),
                        turn_id: turn_id.clone(),
                        text: r.text,
                        source_passage_id: r.source_passage_id,
                        source,
                        char_span: r.char_span,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let set = NuggetSet::new(turn_id.clone(), nuggets)?;
            Ok((turn_id, set))
        })
        .collect()
}

pub fn write_nugget_file(sets: &BTreeMap<String, NuggetSet>) -> String {
    let raw: BTreeMap<&str, Vec<RawNugget>> = sets
        .iter()
        .map(|(turn_id, set)| {
            let nuggets = set
                .iter()
                .map(|n| RawNugget {
                    nugget_id: Some(n.nugget_id.clone()),
                    text: n.text.clone(),
                    source_passage_id: n.source_passage_id.clone(),
                    char_span: n.char_span,
                })
                .collect();
            (turn_id.as_str(), nuggets)
        })
        .collect();
    serde_json::to_string_pretty(&raw).expect("nugget file serializes")
}

/// Strict-mode check that every nugget turn exists in the loaded topics.
pub fn validate_nugget_turns(sets: &BTreeMap<String, NuggetSet>, topics: &Topics) -> Result<()> {
    match sets.keys().find(|t| topics.turn(t).is_none()) {
        Some(unknown) => Err(CorpusError::UnknownTurn(unknown.clone())),
        None => Ok(()),
    }
}

/// Parses an array of `{turn_id, text, supporting_passage_ids}`.
pub fn parse_gold_responses(input: &str) -> Result<BTreeMap<String, GoldResponse>> {
    let raw: Vec<GoldResponse> = serde_json::from_str(input)?;
    let mut out = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for g in raw {
        if g.text.trim().is_empty() {
            return Err(CorpusError::invalid(format!("gold response `{}`", g.turn_id), "empty text"));
        }
        if !seen.insert(g.turn_id.clone()) {
            return Err(CorpusError::DuplicateTurn(g.turn_id));
        }
        out.insert(g.turn_id.clone(), g);
    }
    Ok(out)
}

pub fn write_gold_responses(gold: &BTreeMap<String, GoldResponse>) -> String {
    let list: Vec<&GoldResponse> = gold.values().collect();
    serde_json::to_string_pretty(&list).expect("gold responses serialize")
}
