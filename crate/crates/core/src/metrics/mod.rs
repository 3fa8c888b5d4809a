//! Nugget, surface, groundedness and retrieval metrics.

mod grounded;
mod nugget;
mod retrieval;
mod rouge;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::scalar::{mean, Scalar};

pub use grounded::{groundedness, Groundedness, GroundednessError};
pub use nugget::{precision_ntn, recall, recall_ntn, recall_ntr};
pub use retrieval::{
    average_precision, dcg, evaluate_retrieval, ndcg_at, precision_at, recall_at, Gain, RetrievalConfig,
    RetrievalScores,
};
pub use rouge::{lcs_len, rouge, rouge_tokens, RougeScore, RougeVariant};

/// Metric values for one turn, keyed by metric name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TurnMetrics<F: Scalar> {
    pub turn_id: String,
    pub values: BTreeMap<String, F>,
    /// Conditions such as an empty extracted set or a missing reference.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub flags: BTreeSet<String>,
}

impl<F: Scalar> TurnMetrics<F> {
    pub fn new(turn_id: impl Into<String>) -> Self {
        TurnMetrics { turn_id: turn_id.into(), values: BTreeMap::new(), flags: BTreeSet::new() }
    }

    pub fn set(&mut self, metric: impl Into<String>, value: F) {
        self.values.insert(metric.into(), value);
    }

    pub fn flag(&mut self, flag: impl Into<String>) {
        self.flags.insert(flag.into());
    }

    pub fn get(&self, metric: &str) -> Option<F> {
        self.values.get(metric).copied()
    }
}

/// Per-turn metrics of one run with unweighted means. A metric's mean runs
/// over the turns that carry a value for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RunMetrics<F: Scalar> {
    pub run_tag: String,
    pub turns: BTreeMap<String, TurnMetrics<F>>,
    pub means: BTreeMap<String, F>,
    pub evaluated_turns: BTreeMap<String, usize>,
}

impl<F: Scalar> RunMetrics<F> {
    pub fn from_turns(run_tag: impl Into<String>, turns: impl IntoIterator<Item = TurnMetrics<F>>) -> Self {
        let turns: BTreeMap<String, TurnMetrics<F>> = turns.into_iter().map(|t| (t.turn_id.clone(), t)).collect();
        let names: BTreeSet<&String> = turns.values().flat_map(|t| t.values.keys()).collect();
        let mut means = BTreeMap::new();
        let mut evaluated_turns = BTreeMap::new();
        for name in names {
            let values: Vec<F> = turns.values().filter_map(|t| t.get(name)).collect();
            evaluated_turns.insert(name.clone(), values.len());
            if let Some(m) = mean(values) {
                means.insert(name.clone(), m);
            }
        }
        RunMetrics { run_tag: run_tag.into(), turns, means, evaluated_turns }
    }

    pub fn mean(&self, metric: &str) -> Option<F> {
        self.means.get(metric).copied()
    }
}
