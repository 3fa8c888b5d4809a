use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{PassageStore, Response};
use crate::gateway::{EntailmentQuery, Gateway, GatewayError};
use crate::scalar::Scalar;
use crate::text::split_sentences;

#[derive(Debug, Error)]
pub enum GroundednessError {
    #[error("no text for provenance passage `{0}`")]
    MissingPassage(String),
    #[error(transparent)]
    Backend(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Groundedness<F: Scalar> {
    pub value: F,
    pub sentences: usize,
    pub supported: usize,
    /// The response listed no provenance passages; value is 0.
    pub no_provenance: bool,
}

/// Share of response sentences entailed by at least one of the first
/// `top_k` provenance passages, each passage tried as a separate premise.
pub fn groundedness<F: Scalar>(
    gateway: &Gateway,
    response: &Response,
    passages: &PassageStore,
    top_k: usize,
) -> Result<Groundedness<F>, GroundednessError> {
    let ids: Vec<&String> = response.passage_provenance.iter().take(top_k).collect();
    let sentences = split_sentences(&response.text);
    if ids.is_empty() {
        return Ok(Groundedness { value: F::zero(), sentences: sentences.len(), supported: 0, no_provenance: true });
    }
    let texts: Vec<&str> = ids
        .iter()
        .map(|id| passages.get(id).ok_or_else(|| GroundednessError::MissingPassage(id.to_string())))
        .collect::<Result<_, _>>()?;
    if sentences.is_empty() {
        return Ok(Groundedness { value: F::zero(), sentences: 0, supported: 0, no_provenance: false });
    }
    let queries: Vec<EntailmentQuery> = sentences
        .iter()
        .flat_map(|s| texts.iter().map(move |p| EntailmentQuery::new(*p, s.as_str())))
        .collect();
    let verdicts = gateway.fan_out(&queries, |q| gateway.entail(q));
    let mut entailed = Vec::with_capacity(verdicts.len());
    for v in verdicts {
        entailed.push(v?.entails());
    }
    let supported = entailed.chunks(texts.len()).filter(|row| row.iter().any(|&e| e)).count();
    Ok(Groundedness { value: F::ratio(supported, sentences.len()), sentences: sentences.len(), supported, no_provenance: false })
}
