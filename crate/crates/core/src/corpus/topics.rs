//! Topic files: one JSON array of topics, each with its persona statements
//! (PTKB) and ordered turns.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

/// Binary relevance of a statement per turn, by source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PtkbLabels {
    #[serde(default)]
    pub organizer: BTreeMap<String, u8>,
    #[serde(default)]
    pub assessor: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtkbStatement {
    pub statement_id: String,
    pub text: String,
    #[serde(default)]
    pub relevance_labels: PtkbLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_id: String,
    /// 1-based position within the topic; optional in files, checked when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_index: Option<u32>,
    pub utterance: String,
    #[serde(default)]
    pub resolved_utterance: String,
    #[serde(default)]
    pub canonical_response: String,
    #[serde(default)]
    pub response_provenance: Vec<String>,
    #[serde(default)]
    pub ptkb_provenance: Vec<String>,
    #[serde(default)]
    pub assessed: bool,
    /// Derived on load: at least one PTKB statement is relevant to the turn.
    #[serde(skip)]
    pub personal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub ptkb: Vec<PtkbStatement>,
    pub turns: Vec<Turn>,
}

impl Topic {
    /// Assessor labels win for a turn when present; organizer labels
    /// otherwise.
    fn turn_is_personal(&self, turn_id: &str) -> bool {
        let assessed = self.ptkb.iter().any(|s| s.relevance_labels.assessor.contains_key(turn_id));
        self.ptkb.iter().any(|s| {
            let labels =
                if assessed { &s.relevance_labels.assessor } else { &s.relevance_labels.organizer };
            labels.get(turn_id) == Some(&1)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CollectionStats {
    pub topics: usize,
    pub turns: usize,
    pub assessed_turns: usize,
    pub ptkb_statements: usize,
}

/// Loaded topics with a turn index.
#[derive(Debug, Clone, Default)]
pub struct Topics {
    topics: Vec<Topic>,
    index: BTreeMap<String, (usize, usize)>,
}

impl Topics {
    pub fn new(mut topics: Vec<Topic>) -> Result<Self> {
        let mut topic_ids = BTreeSet::new();
        let mut index = BTreeMap::new();
        for (ti, topic) in topics.iter_mut().enumerate() {
            let ctx = format!("topic `{}`", topic.topic_id);
            if topic.topic_id.trim().is_empty() {
                return Err(CorpusError::invalid("topic", "empty topic_id"));
            }
            if !topic_ids.insert(topic.topic_id.clone()) {
                return Err(CorpusError::invalid(ctx, "duplicate topic_id"));
            }
            for s in &topic.ptkb {
                let labels = s.relevance_labels.organizer.values().chain(s.relevance_labels.assessor.values());
                if let Some(bad) = labels.into_iter().find(|&&l| l > 1) {
                    return Err(CorpusError::invalid(
                        format!("{ctx} statement `{}`", s.statement_id),
                        format!("label {bad} is not 0 or 1"),
                    ));
                }
            }
            let personal: Vec<bool> = topic.turns.iter().map(|t| topic.turn_is_personal(&t.turn_id)).collect();
            for (pos, (turn, personal)) in topic.turns.iter_mut().zip(personal).enumerate() {
                if let Some(i) = turn.turn_index {
                    if i as usize != pos + 1 {
                        return Err(CorpusError::invalid(
                            format!("turn `{}`", turn.turn_id),
                            format!("turn_index {i} at position {}", pos + 1),
                        ));
                    }
                }
                if turn.assessed && turn.resolved_utterance.trim().is_empty() {
                    return Err(CorpusError::invalid(
                        format!("turn `{}`", turn.turn_id),
                        "assessed turn without resolved_utterance",
                    ));
                }
                if index.insert(turn.turn_id.clone(), (ti, pos)).is_some() {
                    return Err(CorpusError::DuplicateTurn(turn.turn_id.clone()));
                }
                turn.personal = personal;
            }
        }
        Ok(Topics { topics, index })
    }

    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    pub fn turn(&self, turn_id: &str) -> Option<&Turn> {
        let &(t, i) = self.index.get(turn_id)?;
        Some(&self.topics[t].turns[i])
    }

    pub fn turns(&self) -> impl Iterator<Item = &Turn> {
        self.topics.iter().flat_map(|t| t.turns.iter())
    }

    /// Resolved utterance, falling back to the raw utterance when empty.
    pub fn query_for(&self, turn_id: &str) -> Option<&str> {
        let turn = self.turn(turn_id)?;
        Some(if turn.resolved_utterance.trim().is_empty() { &turn.utterance } else { &turn.resolved_utterance })
    }

    pub fn stats(&self) -> CollectionStats {
        CollectionStats {
            topics: self.topics.len(),
            turns: self.index.len(),
            assessed_turns: self.turns().filter(|t| t.assessed).count(),
            ptkb_statements: self.topics.iter().map(|t| t.ptkb.len()).sum(),
        }
    }
}

pub fn parse_topics(input: &str) -> Result<Topics> {
    let raw: Vec<Topic> = serde_json::from_str(input)?;
    Topics::new(raw)
}

pub fn write_topics(topics: &Topics) -> String {
    serde_json::to_string_pretty(topics.topics()).expect("topics serialize")
}
