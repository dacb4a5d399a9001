//! Uniform chat-completion access for the agents.
//!
//! A [`Gateway`] owns a set of named backends (scripted mocks or HTTP
//! providers), an optional on-disk response cache and a retry policy. Every
//! call produces a [`ChatExchange`], which the pipeline records in its
//! transcript.

mod cache;
mod http;
mod mock;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{CacheEntry, ResponseCache};
pub use http::{HttpBackend, HttpBackendConfig, RequestShape};
pub use mock::{Fallback, Matcher, MockBackend, Reply};

/// Ceiling on `max_new_tokens`, matching the generation budget used for all
/// agents.
pub const DEFAULT_MAX_TOKENS_CEILING: u32 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatParams {
    pub temperature: f64,
    pub max_new_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

impl Default for ChatParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_new_tokens: DEFAULT_MAX_TOKENS_CEILING,
            stop: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub backend_id: String,
    pub messages: Vec<ChatMessage>,
    pub params: ChatParams,
}

impl ChatRequest {
    pub fn new(backend_id: impl Into<String>, messages: Vec<ChatMessage>, params: ChatParams) -> Self {
        Self { backend_id: backend_id.into(), messages, params }
    }

    /// Stable SHA-256 over the canonical JSON of backend, messages and params.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// All message contents joined by newlines; what mock matchers search.
    pub fn joined_content(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// One completed gateway call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: ChatRequest,
    pub response_text: String,
    pub latency_ms: u64,
    pub cache_hit: bool,
    /// Transport attempts made; 0 on a cache hit.
    pub attempts: u32,
    pub fingerprint: String,
}

impl ChatExchange {
    /// Copy with run-dependent telemetry zeroed, for determinism checks.
    pub fn without_telemetry(&self) -> ChatExchange {
        ChatExchange {
            latency_ms: 0,
            cache_hit: false,
            attempts: 0,
            ..self.clone()
        }
    }
}

/// Failure reported by a backend for a single attempt.
#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    /// Timeouts, connection failures and rate-limit signals; retried.
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider payload: {0}")]
    Protocol(String),
    #[error("no scripted reply for request {fingerprint} (last user message: {excerpt:?})")]
    ScriptedMiss { fingerprint: String, excerpt: String },
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("backend `{0}` is already registered")]
    DuplicateBackend(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("backend `{0}` returned an empty response")]
    EmptyResponse(String),
    #[error("response cache error: {0}")]
    Cache(#[from] std::io::Error),
}

pub trait ChatBackend: Send + Sync {
    /// Performs one attempt. `fingerprint` is the request's stable hash.
    fn send(&self, request: &ChatRequest, fingerprint: &str) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `n + 1`, doubling from `base_delay`.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = 1u32 << attempt.saturating_sub(1).min(16);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

pub struct Gateway {
    backends: BTreeMap<String, Arc<dyn ChatBackend>>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    max_tokens_ceiling: u32,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Self {
            backends: BTreeMap::new(),
            cache: None,
            retry: RetryPolicy::default(),
            max_tokens_ceiling: DEFAULT_MAX_TOKENS_CEILING,
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_tokens_ceiling(mut self, ceiling: u32) -> Self {
        self.max_tokens_ceiling = ceiling;
        self
    }

    pub fn set_cache(&mut self, cache: Option<ResponseCache>) {
        self.cache = cache;
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    pub fn has_backend(&self, id: &str) -> bool {
        self.backends.contains_key(id)
    }

    pub fn backend_ids(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }

    /// Registers any backend implementation under `id`.
    pub fn register(&mut self, id: impl Into<String>, backend: Arc<dyn ChatBackend>) -> Result<String, GatewayError> {
        let id = id.into();
        if self.backends.contains_key(&id) {
            return Err(GatewayError::DuplicateBackend(id));
        }
        self.backends.insert(id.clone(), backend);
        Ok(id)
    }

    pub fn register_mock(&mut self, id: impl Into<String>, mock: MockBackend) -> Result<String, GatewayError> {
        self.register(id, Arc::new(mock))
    }

    /// Registers an HTTP provider. Fails if the URL is malformed or the auth
    /// token environment variable is unset.
    pub fn register_http(&mut self, config: HttpBackendConfig) -> Result<String, GatewayError> {
        let id = config.id.clone();
        if self.backends.contains_key(&id) {
            return Err(GatewayError::DuplicateBackend(id));
        }
        let backend = HttpBackend::new(config)?;
        self.register(id, Arc::new(backend))
    }

    fn validate(&self, request: &ChatRequest) -> Result<(), GatewayError> {
        let first = request
            .messages
            .first()
            .ok_or_else(|| GatewayError::InvalidRequest("no messages".into()))?;
        if first.role == Role::Assistant {
            return Err(GatewayError::InvalidRequest(
                "first message must be system or user".into(),
            ));
        }
        let p = &request.params;
        if !(p.temperature.is_finite() && p.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} out of range", p.temperature)));
        }
        if p.max_new_tokens == 0 || p.max_new_tokens > self.max_tokens_ceiling {
            return Err(GatewayError::InvalidRequest(format!(
                "max_new_tokens {} outside 1..={}",
                p.max_new_tokens, self.max_tokens_ceiling
            )));
        }
        Ok(())
    }

    /// Runs one chat completion, consulting the cache first and retrying
    /// transient failures with exponential backoff.
    pub fn complete(&self, request: ChatRequest) -> Result<ChatExchange, GatewayError> {
        self.validate(&request)?;
        let backend = self
            .backends
            .get(&request.backend_id)
            .ok_or_else(|| GatewayError::UnknownBackend(request.backend_id.clone()))?;
        let fingerprint = request.fingerprint();
        let started = Instant::now();

        if let Some(cache) = &self.cache {
            if let Some(text) = cache.get(&fingerprint)? {
                return Ok(ChatExchange {
                    request,
                    response_text: text,
                    latency_ms: started.elapsed().as_millis() as u64,
                    cache_hit: true,
                    attempts: 0,
                    fingerprint,
                });
            }
        }

        let mut attempts = 0;
        let text = loop {
            attempts += 1;
            match backend.send(&request, &fingerprint) {
                Ok(text) => break text,
                Err(BackendError::Transient(msg)) => {
                    if attempts >= self.retry.max_attempts {
                        return Err(GatewayError::RetriesExhausted { attempts, last: msg });
                    }
                    log::warn!("backend {} attempt {attempts} failed: {msg}", request.backend_id);
                    std::thread::sleep(self.retry.delay_after(attempts));
                }
                Err(e) => return Err(e.into()),
            }
        };
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyResponse(request.backend_id.clone()));
        }
        if let Some(cache) = &self.cache {
            cache.put(&fingerprint, &request, &text)?;
        }
        Ok(ChatExchange {
            request,
            response_text: text,
            latency_ms: started.elapsed().as_millis() as u64,
            cache_hit: false,
            attempts,
            fingerprint,
        })
    }
}
