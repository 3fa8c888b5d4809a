//! Deterministic in-process backends for tests, fixtures and dry runs.

use std::collections::HashMap;

use super::{EntailmentBackend, EntailmentQuery, EntailmentVerdict, GatewayError, LlmBackend, LlmRequest, Result};
use crate::prompts;
use crate::text::{normalize_whitespace, split_sentences, tokenize};

/// Same completion for every request.
pub struct ConstantLlm {
    text: String,
}

impl ConstantLlm {
    pub fn new(text: impl Into<String>) -> Self {
        ConstantLlm { text: text.into() }
    }
}

impl LlmBackend for ConstantLlm {
    fn model_id(&self) -> &str {
        "mock-constant"
    }

    fn complete(&self, _request: &LlmRequest) -> Result<String> {
        Ok(self.text.clone())
    }
}

/// Completion looked up by exact user message, with an optional fallback.
pub struct CannedLlm {
    replies: HashMap<String, String>,
    fallback: Option<String>,
}

impl CannedLlm {
    pub fn new<K: Into<String>, V: Into<String>>(replies: impl IntoIterator<Item = (K, V)>) -> Self {
        CannedLlm { replies: replies.into_iter().map(|(k, v)| (k.into(), v.into())).collect(), fallback: None }
    }

    pub fn with_fallback(mut self, text: impl Into<String>) -> Self {
        self.fallback = Some(text.into());
        self
    }
}

impl LlmBackend for CannedLlm {
    fn model_id(&self) -> &str {
        "mock-canned"
    }

    fn complete(&self, request: &LlmRequest) -> Result<String> {
        self.replies
            .get(&request.user_message)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| GatewayError::Mock("no canned reply for prompt".into()))
    }
}

pub struct FnLlm<F> {
    id: String,
    f: F,
}

impl<F> FnLlm<F>
where
    F: Fn(&LlmRequest) -> Result<String> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnLlm { id: id.into(), f }
    }
}

impl<F> LlmBackend for FnLlm<F>
where
    F: Fn(&LlmRequest) -> Result<String> + Send + Sync,
{
    fn model_id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &LlmRequest) -> Result<String> {
        (self.f)(request)
    }
}

/// Understands the pipeline prompts:
/// extraction returns each sentence of the text on its own line (or
/// `No nugget` for an empty text); nugget-to-response matching answers
/// `yes` iff the gold nugget occurs in the response, ignoring case and
/// whitespace runs; relevance grading counts query words of four or more
/// letters found in the passage, capped at 4.
#[derive(Debug, Default, Clone, Copy)]
pub struct PromptAwareLlm;

impl LlmBackend for PromptAwareLlm {
    fn model_id(&self) -> &str {
        "mock-prompt-aware"
    }

    fn complete(&self, request: &LlmRequest) -> Result<String> {
        let prompt = request.user_message.as_str();
        if let Some((_, text)) = prompts::parse_extraction_prompt(prompt) {
            let sentences = split_sentences(text);
            return Ok(if sentences.is_empty() { prompts::NO_NUGGET.to_string() } else { sentences.join("\n") });
        }
        if let Some((gold, response)) = prompts::parse_ntr_prompt(prompt) {
            let gold = normalize_whitespace(gold).to_lowercase();
            let response = normalize_whitespace(response).to_lowercase();
            return Ok(if response.contains(&gold) { "yes" } else { "no" }.to_string());
        }
        if let Some((query, passage)) = prompts::parse_relevance_prompt(prompt) {
            let passage: std::collections::BTreeSet<String> = tokenize(passage).into_iter().collect();
            let shared: std::collections::BTreeSet<String> =
                tokenize(query).into_iter().filter(|t| t.chars().count() >= 4 && passage.contains(t)).collect();
            return Ok(shared.len().min(4).to_string());
        }
        Err(GatewayError::Mock("prompt is not an extraction, matching or relevance prompt".into()))
    }
}

/// Entails iff premise and hypothesis are identical strings.
#[derive(Debug, Default, Clone, Copy)]
pub struct ExactMatchEntailment;

impl EntailmentBackend for ExactMatchEntailment {
    fn model_id(&self) -> &str {
        "mock-exact"
    }

    fn entail(&self, q: &EntailmentQuery) -> Result<EntailmentVerdict> {
        Ok(if q.premise == q.hypothesis { EntailmentVerdict::entailment(1.0) } else { EntailmentVerdict::neutral(0.0) })
    }
}

/// Entails iff the hypothesis is a substring of the premise.
#[derive(Debug, Default, Clone, Copy)]
pub struct SubstringEntailment;

impl EntailmentBackend for SubstringEntailment {
    fn model_id(&self) -> &str {
        "mock-substring"
    }

    fn entail(&self, q: &EntailmentQuery) -> Result<EntailmentVerdict> {
        Ok(if q.premise.contains(q.hypothesis.as_str()) {
            EntailmentVerdict::entailment(1.0)
        } else {
            EntailmentVerdict::neutral(0.0)
        })
    }
}

pub struct FnEntailment<F> {
    id: String,
    f: F,
}

impl<F> FnEntailment<F>
where
    F: Fn(&EntailmentQuery) -> Result<EntailmentVerdict> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnEntailment { id: id.into(), f }
    }
}

impl<F> EntailmentBackend for FnEntailment<F>
where
    F: Fn(&EntailmentQuery) -> Result<EntailmentVerdict> + Send + Sync,
{
    fn model_id(&self) -> &str {
        &self.id
    }

    fn entail(&self, query: &EntailmentQuery) -> Result<EntailmentVerdict> {
        (self.f)(query)
    }
}

/// Entailment decided by a predicate over `(premise, hypothesis)`.
pub fn entailment_from<P>(id: &str, predicate: P) -> FnEntailment<impl Fn(&EntailmentQuery) -> Result<EntailmentVerdict> + Send + Sync>
where
    P: Fn(&str, &str) -> bool + Send + Sync,
{
    FnEntailment::new(id, move |q: &EntailmentQuery| {
        Ok(if predicate(&q.premise, &q.hypothesis) {
            EntailmentVerdict::entailment(1.0)
        } else {
            EntailmentVerdict::neutral(0.0)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_aware_extraction_and_matching() {
        let m = PromptAwareLlm;
        let p = prompts::extraction_prompt("q", "Snake plants tolerate drought. They need little water.");
        assert_eq!(m.complete(&LlmRequest::user(p)).unwrap(), "Snake plants tolerate drought.\nThey need little water.");
        let p = prompts::ntr_prompt("Tolerate  drought", "Snake plants tolerate drought and low light");
        assert_eq!(m.complete(&LlmRequest::user(p)).unwrap(), "yes");
        let p = prompts::ntr_prompt("need daily water", "Snake plants tolerate drought and low light");
        assert_eq!(m.complete(&LlmRequest::user(p)).unwrap(), "no");
        assert!(m.complete(&LlmRequest::user("hello")).is_err());
    }

    #[test]
    fn prompt_aware_relevance() {
        let m = PromptAwareLlm;
        let p = prompts::relevance_prompt("Which houseplants tolerate drought?", "Snake plants tolerate drought well.");
        assert_eq!(m.complete(&LlmRequest::user(p)).unwrap(), "2");
        let p = prompts::relevance_prompt("Which houseplants tolerate drought?", "Orchids bloom.");
        assert_eq!(m.complete(&LlmRequest::user(p)).unwrap(), "0");
    }
}
