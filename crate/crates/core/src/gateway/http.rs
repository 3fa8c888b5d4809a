//! HTTP backends.
//!
//! Entailment: `POST {base}/entail` with `{"premise", "hypothesis"}`, reply
//! `{"label": "entailment|neutral|contradiction", "score": float}`.
//!
//! Completion: a chat-completions shaped `POST` (messages array in, first
//! choice's message content out).

use std::time::Duration;

use serde::Deserialize;

use super::{EntailmentBackend, EntailmentLabel, EntailmentQuery, EntailmentVerdict, GatewayError, LlmBackend, LlmRequest, Result};

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Doubled after every failed attempt.
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, initial_backoff: Duration::from_secs(1) }
    }
}

enum Failure {
    Retryable(GatewayError),
    Fatal(GatewayError),
}

fn with_retries<T>(policy: RetryPolicy, mut attempt: impl FnMut() -> Result<T, Failure>) -> Result<T> {
    let attempts = policy.attempts.max(1);
    let mut backoff = policy.initial_backoff;
    let mut last = None;
    for i in 0..attempts {
        match attempt() {
            Ok(v) => return Ok(v),
            Err(Failure::Fatal(e)) => return Err(e),
            Err(Failure::Retryable(e)) => {
                log::warn!("attempt {}/{attempts} failed: {e}", i + 1);
                last = Some(e);
                if i + 1 < attempts {
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
    }
    Err(match last.expect("at least one attempt") {
        GatewayError::Transport { endpoint, message, .. } => GatewayError::Transport { endpoint, attempts, message },
        other => other,
    })
}

fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
) -> Result<serde_json::Value, Failure> {
    let mut req = client.post(url).json(body);
    if let Some(key) = bearer {
        req = req.bearer_auth(key);
    }
    let resp = req.send().map_err(|e| {
        Failure::Retryable(GatewayError::Transport { endpoint: url.to_string(), attempts: 1, message: e.to_string() })
    })?;
    let status = resp.status();
    if !status.is_success() {
        let body = resp.text().unwrap_or_default();
        let err = GatewayError::Status { endpoint: url.to_string(), status: status.as_u16(), body };
        return Err(if status.is_server_error() || status.as_u16() == 429 {
            Failure::Retryable(err)
        } else {
            Failure::Fatal(err)
        });
    }
    resp.json().map_err(|e| {
        Failure::Fatal(GatewayError::MalformedReply { endpoint: url.to_string(), reason: e.to_string() })
    })
}

fn client(timeout: Duration) -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder().timeout(timeout).build().expect("http client")
}

pub struct HttpEntailment {
    url: String,
    model_id: String,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
}

impl HttpEntailment {
    /// `base` is the server root; the client posts to `{base}/entail`.
    pub fn new(base: &str, model_id: impl Into<String>) -> Self {
        HttpEntailment {
            url: format!("{}/entail", base.trim_end_matches('/')),
            model_id: model_id.into(),
            client: client(Duration::from_secs(60)),
            retry: RetryPolicy::default(),
        }
    }

    /// Reads `CONE_NLI_ENDPOINT` (and optionally `CONE_NLI_MODEL`).
    pub fn from_env() -> Option<Self> {
        let base = std::env::var("CONE_NLI_ENDPOINT").ok().filter(|s| !s.is_empty())?;
        let model = std::env::var("CONE_NLI_MODEL").unwrap_or_else(|_| "nli".to_string());
        Some(Self::new(&base, model))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

#[derive(Deserialize)]
struct WireVerdict {
    label: String,
    score: f64,
}

impl EntailmentBackend for HttpEntailment {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn entail(&self, query: &EntailmentQuery) -> Result<EntailmentVerdict> {
        let body = serde_json::json!({ "premise": query.premise, "hypothesis": query.hypothesis });
        let reply = with_retries(self.retry, || post_json(&self.client, &self.url, None, &body))?;
        let malformed = |reason: String| GatewayError::MalformedReply { endpoint: self.url.clone(), reason };
        let wire: WireVerdict = serde_json::from_value(reply).map_err(|e| malformed(e.to_string()))?;
        let label = match wire.label.as_str() {
            "entailment" => EntailmentLabel::Entailment,
            "neutral" => EntailmentLabel::Neutral,
            "contradiction" => EntailmentLabel::Contradiction,
            other => return Err(malformed(format!("unknown label `{other}`"))),
        };
        if !(0.0..=1.0).contains(&wire.score) {
            return Err(malformed(format!("score {} outside [0, 1]", wire.score)));
        }
        Ok(EntailmentVerdict { label, score: wire.score })
    }
}

pub struct HttpLlm {
    url: String,
    model_id: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
}

impl HttpLlm {
    /// `endpoint` may be a server root or the full chat-completions URL.
    pub fn new(endpoint: &str, model_id: impl Into<String>, api_key: Option<String>) -> Self {
        let endpoint = endpoint.trim_end_matches('/');
        let url = if endpoint.ends_with("/chat/completions") {
            endpoint.to_string()
        } else if endpoint.ends_with("/v1") {
            format!("{endpoint}/chat/completions")
        } else {
            format!("{endpoint}/v1/chat/completions")
        };
        HttpLlm { url, model_id: model_id.into(), api_key, client: client(Duration::from_secs(180)), retry: RetryPolicy::default() }
    }

    /// Reads `CONE_LLM_ENDPOINT`, `CONE_LLM_MODEL` and `CONE_LLM_KEY`.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var("CONE_LLM_ENDPOINT").ok().filter(|s| !s.is_empty())?;
        let model = std::env::var("CONE_LLM_MODEL").ok().filter(|s| !s.is_empty())?;
        let key = std::env::var("CONE_LLM_KEY").ok().filter(|s| !s.is_empty());
        Some(Self::new(&endpoint, model, key))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl LlmBackend for HttpLlm {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &LlmRequest) -> Result<String> {
        let mut messages = Vec::new();
        if !request.system_instruction.is_empty() {
            messages.push(serde_json::json!({"role": "system", "content": request.system_instruction}));
        }
        messages.push(serde_json::json!({"role": "user", "content": request.user_message}));
        let body = serde_json::json!({
            "model": self.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let reply = with_retries(self.retry, || post_json(&self.client, &self.url, self.api_key.as_deref(), &body))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| GatewayError::MalformedReply {
                endpoint: self.url.clone(),
                reason: "missing choices[0].message.content".into(),
            })
    }
}
