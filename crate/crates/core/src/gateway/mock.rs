use std::fmt;
use std::sync::Arc;

use super::{BackendError, ChatBackend, ChatRequest};

pub type ReplyFn = Arc<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

/// Selects which requests a scripted rule answers.
#[derive(Debug, Clone)]
pub enum Matcher {
    /// Exact request fingerprint.
    Fingerprint(String),
    /// Substring anywhere in the joined message contents.
    Contains(String),
}

impl Matcher {
    fn matches(&self, fingerprint: &str, joined: &str) -> bool {
        match self {
            Matcher::Fingerprint(fp) => fp == fingerprint,
            Matcher::Contains(s) => joined.contains(s.as_str()),
        }
    }
}

#[derive(Clone)]
pub enum Reply {
    Text(String),
    /// Computed reply; `None` passes the request on to the next rule.
    Dynamic(ReplyFn),
}

impl fmt::Debug for Reply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reply::Text(t) => f.debug_tuple("Text").field(t).finish(),
            Reply::Dynamic(_) => f.write_str("Dynamic(..)"),
        }
    }
}

/// What to do when no rule matches.
#[derive(Clone)]
pub enum Fallback {
    EchoLastUser,
    Text(String),
    Rule(ReplyFn),
}

impl fmt::Debug for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fallback::EchoLastUser => f.write_str("EchoLastUser"),
            Fallback::Text(t) => f.debug_tuple("Text").field(t).finish(),
            Fallback::Rule(_) => f.write_str("Rule(..)"),
        }
    }
}

/// Deterministic scripted backend. Rules are tried in insertion order; the
/// first match answers.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    rules: Vec<(Matcher, Reply)>,
    fallback: Option<Fallback>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rule(mut self, matcher: Matcher, reply: Reply) -> Self {
        self.rules.push((matcher, reply));
        self
    }

    pub fn on_fingerprint(self, fingerprint: impl Into<String>, text: impl Into<String>) -> Self {
        self.rule(Matcher::Fingerprint(fingerprint.into()), Reply::Text(text.into()))
    }

    pub fn on_contains(self, needle: impl Into<String>, text: impl Into<String>) -> Self {
        self.rule(Matcher::Contains(needle.into()), Reply::Text(text.into()))
    }

    pub fn on_contains_with<F>(self, needle: impl Into<String>, f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
    {
        self.rule(Matcher::Contains(needle.into()), Reply::Dynamic(Arc::new(f)))
    }

    pub fn with_fallback(mut self, fallback: Fallback) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn reply(&self, request: &ChatRequest, fingerprint: &str) -> Result<String, BackendError> {
        let joined = request.joined_content();
        for (matcher, reply) in &self.rules {
            if !matcher.matches(fingerprint, &joined) {
                continue;
            }
            match reply {
                Reply::Text(t) => return Ok(t.clone()),
                Reply::Dynamic(f) => {
                    if let Some(t) = f(request) {
                        return Ok(t);
                    }
                }
            }
        }
        let fallback = match &self.fallback {
            Some(Fallback::EchoLastUser) => request.last_user_message().map(str::to_string),
            Some(Fallback::Text(t)) => Some(t.clone()),
            Some(Fallback::Rule(f)) => f(request),
            None => None,
        };
        fallback.ok_or_else(|| BackendError::ScriptedMiss {
            fingerprint: fingerprint.to_string(),
            excerpt: request
                .last_user_message()
                .map(|m| crate::text::truncate_chars(m, 80))
                .unwrap_or_default(),
        })
    }
}

impl ChatBackend for MockBackend {
    fn send(&self, request: &ChatRequest, fingerprint: &str) -> Result<String, BackendError> {
        self.reply(request, fingerprint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatMessage, ChatParams};

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new(
            "m",
            vec![ChatMessage::system("sys"), ChatMessage::user(text)],
            ChatParams::default(),
        )
    }

    #[test]
    fn first_matching_rule_wins() {
        let mock = MockBackend::new()
            .on_contains("Identify unknown terms", r#"{"terms": []}"#)
            .on_contains("Identify", "second");
        let r = req("Identify unknown terms in: hello");
        assert_eq!(mock.reply(&r, &r.fingerprint()).unwrap(), r#"{"terms": []}"#);
    }

    #[test]
    fn dynamic_none_falls_through() {
        let mock = MockBackend::new()
            .on_contains_with("x", |_| None)
            .on_contains("x", "later");
        let r = req("x");
        assert_eq!(mock.reply(&r, "").unwrap(), "later");
    }

    #[test]
    fn echo_fallback() {
        let mock = MockBackend::new().with_fallback(Fallback::EchoLastUser);
        let r = req("repeat me");
        assert_eq!(mock.reply(&r, "").unwrap(), "repeat me");
        assert_eq!(mock.reply(&r, "").unwrap(), "repeat me");
    }

    #[test]
    fn miss_identifies_request() {
        let r = req("what is this");
        match MockBackend::new().reply(&r, "fp123") {
            Err(BackendError::ScriptedMiss { fingerprint, excerpt }) => {
                assert_eq!(fingerprint, "fp123");
                assert_eq!(excerpt, "what is this");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
