use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::{StatusCode, Url};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatRequest, GatewayError};

/// Provider wire shapes the HTTP backend can speak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestShape {
    /// `POST` of `{model, messages, temperature, max_tokens, stop}`; reply
    /// text read from `choices[0].message.content`.
    #[default]
    OpenaiChatV1,
}

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub id: String,
    /// Full chat-completions URL.
    pub endpoint_url: String,
    /// Environment variable holding the bearer token.
    pub auth_token_env: String,
    pub model: String,
    pub shape: RequestShape,
    pub timeout: Duration,
}

impl HttpBackendConfig {
    pub fn new(id: &str, endpoint_url: &str, auth_token_env: &str, model: &str) -> Self {
        Self {
            id: id.to_string(),
            endpoint_url: endpoint_url.to_string(),
            auth_token_env: auth_token_env.to_string(),
            model: model.to_string(),
            shape: RequestShape::OpenaiChatV1,
            timeout: Duration::from_secs(120),
        }
    }
}

pub struct HttpBackend {
    client: Client,
    url: Url,
    token: String,
    model: String,
    shape: RequestShape,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, GatewayError> {
        let url = Url::parse(&config.endpoint_url)
            .map_err(|e| GatewayError::Config(format!("bad endpoint `{}`: {e}", config.endpoint_url)))?;
        let token = std::env::var(&config.auth_token_env).map_err(|_| {
            GatewayError::Config(format!(
                "auth token variable `{}` is not set for backend `{}`",
                config.auth_token_env, config.id
            ))
        })?;
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            client,
            url,
            token,
            model: config.model,
            shape: config.shape,
        })
    }

    fn body(&self, request: &ChatRequest) -> Value {
        match self.shape {
            RequestShape::OpenaiChatV1 => {
                let mut body = json!({
                    "model": self.model,
                    "messages": request.messages,
                    "temperature": request.params.temperature,
                    "max_tokens": request.params.max_new_tokens,
                });
                if let Some(stop) = &request.params.stop {
                    body["stop"] = json!(stop);
                }
                body
            }
        }
    }
}

/// Extracts the first choice's text from an OpenAI-style chat response.
pub(crate) fn first_choice_text(payload: &Value) -> Result<String, BackendError> {
    payload
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Protocol("missing choices[0].message.content".into()))
}

impl ChatBackend for HttpBackend {
    fn send(&self, request: &ChatRequest, _fingerprint: &str) -> Result<String, BackendError> {
        let response = self
            .client
            .post(self.url.clone())
            .bearer_auth(&self.token)
            .json(&self.body(request))
            .send()
            .map_err(|e| {
                if e.is_timeout() || e.is_connect() || e.is_request() {
                    BackendError::Transient(e.to_string())
                } else {
                    BackendError::Protocol(e.to_string())
                }
            })?;
        let status = response.status();
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Err(BackendError::Transient("rate limited (HTTP 429)".into()));
        }
        let body = response
            .text()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: crate::text::truncate_chars(&body, 200),
            });
        }
        let payload: Value =
            serde_json::from_str(&body).map_err(|e| BackendError::Protocol(e.to_string()))?;
        first_choice_text(&payload)
    }
}
