// SPDX-License-Identifier: Apache-2.0

//! Chat providers and the cached, retrying gateway in front of them.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{CacheKey, ResponseCache};
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "PROBEGEN_API_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub sample_index: u64,
}

impl DecodeParams {
    pub fn new(model_id: impl Into<String>, temperature: f64) -> Self {
        DecodeParams {
            model_id: model_id.into(),
            temperature,
            max_tokens: 4096,
            sample_index: 0,
        }
    }

    pub fn with_sample_index(&self, sample_index: u64) -> Self {
        DecodeParams {
            sample_index,
            ..self.clone()
        }
    }

    pub fn cache_key(&self, prompt: &str) -> CacheKey {
        CacheKey::derive(
            &self.model_id,
            self.temperature,
            self.max_tokens,
            prompt,
            self.sample_index,
        )
    }
}

/// What a request is for. Scripted providers use it to find their answer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RequestKind {
    /// Probe sampling at a search-tree position: dot-joined sample indices
    /// from the root, e.g. `0.2.1`. The turn is the number of components.
    Probe { position: String },
    /// Spurious-difference judgment for one differentiating input.
    Judge { input_repr: String },
}

#[derive(Clone, Debug)]
pub struct ChatRequest<'a> {
    /// Free-form namespace, e.g. the implementation pair under search.
    pub scope: &'a str,
    pub kind: RequestKind,
    pub prompt: &'a str,
    pub params: &'a DecodeParams,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProviderError {
    /// Worth retrying: transport errors, 429 and 5xx.
    Transient(String),
    Fatal(String),
}

impl std::fmt::Display for ProviderError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProviderError::Transient(m) => write!(f, "transient: {m}"),
            ProviderError::Fatal(m) => write!(f, "fatal: {m}"),
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest<'_>) -> std::result::Result<String, ProviderError>;
}

/// OpenAI-compatible `POST {base_url}/chat/completions`.
pub struct HttpProvider {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpProvider {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            agent,
        }
    }

    /// Reads the API key from `PROBEGEN_API_KEY`.
    pub fn from_env(base_url: impl Into<String>, timeout: Duration) -> Self {
        Self::new(base_url, std::env::var(API_KEY_ENV).ok(), timeout)
    }
}

impl ChatProvider for HttpProvider {
    fn complete(&self, request: &ChatRequest<'_>) -> std::result::Result<String, ProviderError> {
        let body = json!({
            "model": request.params.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        });
        let url = format!("{}/chat/completions", self.base_url);
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(ProviderError::Transient(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ProviderError::Fatal(format!("HTTP {status}: {text}")));
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Fatal(format!("malformed response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Fatal("response has no message content".to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptBook {
    /// Probe responses by tree position.
    #[serde(default)]
    pub probes: HashMap<String, String>,
    #[serde(default)]
    pub probe_fallback: Option<String>,
    /// Judge responses by the judged input's `input_repr`.
    #[serde(default)]
    pub judge: HashMap<String, String>,
    #[serde(default)]
    pub judge_fallback: Option<String>,
}

impl ScriptBook {
    fn lookup(&self, kind: &RequestKind) -> Option<&String> {
        match kind {
            RequestKind::Probe { position } => {
                self.probes.get(position).or(self.probe_fallback.as_ref())
            }
            RequestKind::Judge { input_repr } => {
                self.judge.get(input_repr).or(self.judge_fallback.as_ref())
            }
        }
    }
}

/// Replays responses from a fixture keyed by tree position (probes) or input
/// (judge). A scope-specific book, when present, takes precedence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedProvider {
    #[serde(flatten)]
    pub book: ScriptBook,
    #[serde(default)]
    pub scopes: HashMap<String, ScriptBook>,
}

impl ScriptedProvider {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn probe(mut self, position: &str, response: impl Into<String>) -> Self {
        self.book.probes.insert(position.to_string(), response.into());
        self
    }

    pub fn probe_fallback(mut self, response: impl Into<String>) -> Self {
        self.book.probe_fallback = Some(response.into());
        self
    }

    pub fn judge(mut self, input_repr: &str, response: impl Into<String>) -> Self {
        self.book.judge.insert(input_repr.to_string(), response.into());
        self
    }

    pub fn judge_fallback(mut self, response: impl Into<String>) -> Self {
        self.book.judge_fallback = Some(response.into());
        self
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, request: &ChatRequest<'_>) -> std::result::Result<String, ProviderError> {
        self.scopes
            .get(request.scope)
            .and_then(|b| b.lookup(&request.kind))
            .or_else(|| self.book.lookup(&request.kind))
            .cloned()
            .ok_or_else(|| {
                ProviderError::Fatal(format!(
                    "no scripted response for {:?} in scope {:?}",
                    request.kind, request.scope
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            initial_backoff: Duration::ZERO,
            max_backoff: Duration::ZERO,
        }
    }

    fn backoff(&self, failed_attempts: u32) -> Duration {
        let factor = 2u32.saturating_pow(failed_attempts.saturating_sub(1));
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sampled {
    pub text: String,
    /// Provider attempts spent; 0 when served from cache.
    pub attempts: u32,
    pub from_cache: bool,
}

/// Provider + response cache + retry policy.
#[derive(Clone)]
pub struct LlmGateway {
    provider: Arc<dyn ChatProvider>,
    cache: Option<Arc<ResponseCache>>,
    retry: RetryPolicy,
    provider_calls: Arc<AtomicU64>,
}

impl LlmGateway {
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        LlmGateway {
            provider,
            cache: None,
            retry: RetryPolicy::default(),
            provider_calls: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    /// Provider requests issued so far, cache hits excluded.
    pub fn provider_calls(&self) -> u64 {
        self.provider_calls.load(Ordering::SeqCst)
    }

    /// Samples one response, consulting the cache first. `attempt_limit`
    /// further caps the retry policy (the caller's remaining budget).
    pub fn sample(&self, request: &ChatRequest<'_>, attempt_limit: Option<u32>) -> Result<Sampled> {
        let key = request.params.cache_key(request.prompt);
        if let Some(cache) = &self.cache {
            if let Some(text) = cache.get(&key) {
                return Ok(Sampled {
                    text,
                    attempts: 0,
                    from_cache: true,
                });
            }
        }
        let max_attempts = attempt_limit
            .map_or(self.retry.max_attempts, |l| l.min(self.retry.max_attempts))
            .max(1);
        let mut attempts = 0;
        loop {
            attempts += 1;
            self.provider_calls.fetch_add(1, Ordering::SeqCst);
            match self.provider.complete(request) {
                Ok(text) => {
                    if let Some(cache) = &self.cache {
                        if let Err(e) = cache.put(&key, &text) {
                            log::warn!("could not cache response {key}: {e}");
                        }
                    }
                    return Ok(Sampled {
                        text,
                        attempts,
                        from_cache: false,
                    });
                }
                Err(ProviderError::Transient(msg)) if attempts < max_attempts => {
                    log::debug!("attempt {attempts} failed ({msg}), retrying");
                    std::thread::sleep(self.retry.backoff(attempts));
                }
                Err(err) => {
                    return Err(Error::BudgetedCallFailure {
                        attempts,
                        message: err.to_string(),
                    })
                }
            }
        }
    }
}
