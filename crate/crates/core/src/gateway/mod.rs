//! Access to the two inference capabilities the pipeline needs: free-text
//! completion and pairwise entailment.
//!
//! Every call goes through [`Gateway`], which consults the call cache first,
//! bounds the number of in-flight backend calls, and records fresh answers.

use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod cache;
mod http;
pub mod mock;

pub use cache::{cache_key, CachedValue, CallCache, CallCacheEntry, CallKind};
pub use http::{HttpEntailment, HttpLlm, RetryPolicy};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure talking to {endpoint} after {attempts} attempt(s): {message}")]
    Transport { endpoint: String, attempts: u32, message: String },
    #[error("{endpoint} answered HTTP {status}: {body}")]
    Status { endpoint: String, status: u16, body: String },
    #[error("{endpoint} returned an empty completion")]
    EmptyCompletion { endpoint: String },
    #[error("{endpoint} sent a malformed reply: {reason}")]
    MalformedReply { endpoint: String, reason: String },
    #[error("no {0} backend configured")]
    NoBackend(&'static str),
    #[error("mock backend: {0}")]
    Mock(String),
    #[error("call cache {path}: {message}")]
    Cache { path: String, message: String },
}

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub system_instruction: String,
    pub user_message: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl LlmRequest {
    /// Zero-temperature request with only a user message.
    pub fn user(message: impl Into<String>) -> Self {
        LlmRequest {
            system_instruction: String::new(),
            user_message: message.into(),
            temperature: 0.0,
            max_output_tokens: 1024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.user_message.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty user message".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!("temperature {} < 0", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntailmentQuery {
    pub premise: String,
    pub hypothesis: String,
}

impl EntailmentQuery {
    pub fn new(premise: impl Into<String>, hypothesis: impl Into<String>) -> Self {
        EntailmentQuery { premise: premise.into(), hypothesis: hypothesis.into() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.premise.trim().is_empty() || self.hypothesis.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("premise and hypothesis must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntailmentLabel {
    Entailment,
    Neutral,
    Contradiction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntailmentVerdict {
    pub label: EntailmentLabel,
    pub score: f64,
}

impl EntailmentVerdict {
    pub fn entailment(score: f64) -> Self {
        EntailmentVerdict { label: EntailmentLabel::Entailment, score }
    }

    pub fn neutral(score: f64) -> Self {
        EntailmentVerdict { label: EntailmentLabel::Neutral, score }
    }

    /// Binary decision: the argmax label is `entailment`; the score is ignored.
    pub fn entails(&self) -> bool {
        self.label == EntailmentLabel::Entailment
    }
}

pub trait LlmBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &LlmRequest) -> Result<String>;
}

pub trait EntailmentBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn entail(&self, query: &EntailmentQuery) -> Result<EntailmentVerdict>;
}

/// Counting semaphore bounding in-flight backend calls.
struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn new(max: usize) -> Self {
        Limiter { max: max.max(1), in_flight: Mutex::new(0), freed: Condvar::new() }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
            while *n >= self.max {
                n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
            }
            *n += 1;
        }
        let out = f();
        *self.in_flight.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.freed.notify_one();
        out
    }
}

pub struct Gateway {
    llm: Option<Arc<dyn LlmBackend>>,
    nli: Option<Arc<dyn EntailmentBackend>>,
    cache: Arc<CallCache>,
    limiter: Limiter,
    pool: rayon::ThreadPool,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("llm", &self.llm.as_ref().map(|b| b.model_id().to_string()))
            .field("nli", &self.nli.as_ref().map(|b| b.model_id().to_string()))
            .field("cached", &self.cache.len())
            .field("concurrency", &self.limiter.max)
            .finish()
    }
}

#[derive(Default)]
pub struct GatewayBuilder {
    llm: Option<Arc<dyn LlmBackend>>,
    nli: Option<Arc<dyn EntailmentBackend>>,
    cache: Option<Arc<CallCache>>,
    concurrency: Option<usize>,
}

impl GatewayBuilder {
    pub fn llm(mut self, backend: impl LlmBackend + 'static) -> Self {
        self.llm = Some(Arc::new(backend));
        self
    }

    pub fn llm_arc(mut self, backend: Arc<dyn LlmBackend>) -> Self {
        self.llm = Some(backend);
        self
    }

    pub fn entailment(mut self, backend: impl EntailmentBackend + 'static) -> Self {
        self.nli = Some(Arc::new(backend));
        self
    }

    pub fn entailment_arc(mut self, backend: Arc<dyn EntailmentBackend>) -> Self {
        self.nli = Some(backend);
        self
    }

    pub fn cache(mut self, cache: Arc<CallCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn concurrency(mut self, limit: usize) -> Self {
        self.concurrency = Some(limit.max(1));
        self
    }

    pub fn build(self) -> Gateway {
        let concurrency = self.concurrency.unwrap_or(4);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(concurrency)
            .thread_name(|i| format!("cone-gateway-{i}"))
            .build()
            .expect("gateway thread pool");
        Gateway {
            llm: self.llm,
            nli: self.nli,
            cache: self.cache.unwrap_or_else(|| Arc::new(CallCache::in_memory())),
            limiter: Limiter::new(concurrency),
            pool,
        }
    }
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder::default()
    }

    pub fn cache(&self) -> &CallCache {
        &self.cache
    }

    pub fn concurrency(&self) -> usize {
        self.limiter.max
    }

    pub fn complete(&self, request: &LlmRequest) -> Result<String> {
        request.validate()?;
        let backend = self.llm.as_ref().ok_or(GatewayError::NoBackend("llm"))?;
        let key = cache_key(CallKind::Llm, backend.model_id(), &canonical_llm(request));
        if let Some(CachedValue::Completion(text)) = self.cache.get(&key) {
            return Ok(text);
        }
        let text = self.limiter.run(|| backend.complete(request))?;
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyCompletion { endpoint: backend.model_id().to_string() });
        }
        self.cache.put(&key, CallKind::Llm, CachedValue::Completion(text.clone()))?;
        Ok(text)
    }

    pub fn entail(&self, query: &EntailmentQuery) -> Result<EntailmentVerdict> {
        query.validate()?;
        let backend = self.nli.as_ref().ok_or(GatewayError::NoBackend("entailment"))?;
        let key = cache_key(CallKind::Entailment, backend.model_id(), &canonical_entailment(query));
        if let Some(CachedValue::Verdict(v)) = self.cache.get(&key) {
            return Ok(v);
        }
        let verdict = self.limiter.run(|| backend.entail(query))?;
        if !(0.0..=1.0).contains(&verdict.score) {
            return Err(GatewayError::MalformedReply {
                endpoint: backend.model_id().to_string(),
                reason: format!("score {} outside [0, 1]", verdict.score),
            });
        }
        self.cache.put(&key, CallKind::Entailment, CachedValue::Verdict(verdict))?;
        Ok(verdict)
    }

    /// Maps `f` over `items` on the gateway's worker pool. Output order
    /// follows input order regardless of completion order.
    pub fn fan_out<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        use rayon::prelude::*;
        self.pool.install(|| items.par_iter().map(&f).collect())
    }
}

fn canonical_text(s: &str) -> String {
    s.replace("\r\n", "\n")
}

fn canonical_llm(r: &LlmRequest) -> serde_json::Value {
    serde_json::json!({
        "system": canonical_text(&r.system_instruction),
        "user": canonical_text(&r.user_message),
        "temperature": r.temperature,
        "max_output_tokens": r.max_output_tokens,
    })
}

fn canonical_entailment(q: &EntailmentQuery) -> serde_json::Value {
    serde_json::json!({ "premise": canonical_text(&q.premise), "hypothesis": canonical_text(&q.hypothesis) })
}
