//! The four translation agents plus the CONSIS evaluator.
//!
//! Each agent renders a versioned prompt template, sends it through the
//! [`Gateway`], and parses exactly one structured block from the reply. A
//! reply that does not parse is repaired at most twice: first by re-prompting
//! with the parse error, then by asking for the block alone. Every exchange,
//! including failed ones, is returned so the pipeline can log it.

mod consis;
mod detector;
mod extractor;
mod judge;
pub mod parse;
pub mod prompts;
mod translator;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatExchange, ChatMessage, ChatParams, ChatRequest, Gateway, GatewayError};

pub use consis::{consis_evaluate, ConsisReport, TermFinding};
pub use detector::detect_unknown_terms;
pub use extractor::extract_internal_knowledge;
pub use judge::{judge_document, JudgeOutcome, JudgeVerdict, Verdict};
pub use translator::{
    build_translator_messages, translate_with_knowledge, KnowledgeBudget, TranslationOutput,
};

/// Maximum number of repair re-prompts after the first reply.
pub const MAX_REPAIRS: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Detector,
    Extractor,
    Judge,
    Translator,
    Consis,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AgentKind::Detector => "detector",
            AgentKind::Extractor => "extractor",
            AgentKind::Judge => "judge",
            AgentKind::Translator => "translator",
            AgentKind::Consis => "consis",
        };
        f.write_str(s)
    }
}

/// Where an agent sends its requests.
#[derive(Clone, Copy)]
pub struct AgentContext<'a> {
    pub gateway: &'a Gateway,
    pub backend: &'a str,
    pub params: &'a ChatParams,
}

impl<'a> AgentContext<'a> {
    pub fn new(gateway: &'a Gateway, backend: &'a str, params: &'a ChatParams) -> Self {
        Self { gateway, backend, params }
    }
}

/// A successfully parsed agent reply together with its audit trail.
#[derive(Debug, Clone)]
pub struct AgentOutput<T> {
    pub agent: AgentKind,
    /// Text of the reply that parsed.
    pub raw_text: String,
    pub parsed: T,
    /// 0 when the first reply parsed, up to [`MAX_REPAIRS`].
    pub repair_attempts: u8,
    pub exchanges: Vec<ChatExchange>,
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum AgentErrorKind {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("reply unparsable after {repairs} repairs: {reason}")]
    Unparsable { repairs: u8, reason: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, thiserror::Error)]
#[error("{agent} agent failed: {kind}")]
pub struct AgentError {
    pub agent: AgentKind,
    pub kind: AgentErrorKind,
    /// Exchanges made before the failure, for the transcript.
    pub exchanges: Vec<ChatExchange>,
}

impl AgentError {
    fn new(agent: AgentKind, kind: AgentErrorKind, exchanges: Vec<ChatExchange>) -> Self {
        Self { agent, kind, exchanges }
    }
}

fn repair_message(reason: &str, round: u8) -> String {
    if round == 1 {
        format!(
            "Your previous reply could not be parsed: {reason}\n\
             Reply again with exactly one ```json block that follows the required schema."
        )
    } else {
        "Emit only the ```json block, with no other text.".to_string()
    }
}

/// Sends `messages` and parses the reply with `parse`, repairing at most
/// [`MAX_REPAIRS`] times. `parse` may append warnings.
pub(crate) fn run_structured<T>(
    ctx: &AgentContext<'_>,
    agent: AgentKind,
    messages: Vec<ChatMessage>,
    mut parse: impl FnMut(&str, &mut Vec<String>) -> Result<T, String>,
) -> Result<AgentOutput<T>, AgentError> {
    let mut exchanges = Vec::new();
    let mut conversation = messages;
    let mut repairs = 0u8;
    loop {
        let request = ChatRequest::new(ctx.backend, conversation.clone(), ctx.params.clone());
        let exchange = match ctx.gateway.complete(request) {
            Ok(ex) => ex,
            Err(e) => return Err(AgentError::new(agent, e.into(), exchanges)),
        };
        let raw = exchange.response_text.clone();
        exchanges.push(exchange);
        let mut warnings = Vec::new();
        match parse(&raw, &mut warnings) {
            Ok(parsed) => {
                return Ok(AgentOutput {
                    agent,
                    raw_text: raw,
                    parsed,
                    repair_attempts: repairs,
                    exchanges,
                    warnings,
                })
            }
            Err(reason) if repairs < MAX_REPAIRS => {
                repairs += 1;
                log::debug!("{agent} reply unparsable ({reason}); repair {repairs}");
                conversation.push(ChatMessage::assistant(raw));
                conversation.push(ChatMessage::user(repair_message(&reason, repairs)));
            }
            Err(reason) => {
                return Err(AgentError::new(
                    agent,
                    AgentErrorKind::Unparsable { repairs, reason },
                    exchanges,
                ))
            }
        }
    }
}

/// Bullet list of term surfaces for prompts.
pub(crate) fn term_bullets<'a>(surfaces: impl IntoIterator<Item = &'a str>) -> String {
    let lines: Vec<String> = surfaces.into_iter().map(|s| format!("- {s}")).collect();
    if lines.is_empty() {
        "(none)".to_string()
    } else {
        lines.join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockBackend;

    fn ctx_with(mock: MockBackend) -> Gateway {
        let mut gw = Gateway::new();
        gw.register_mock("m", mock).unwrap();
        gw
    }

    fn parse_num(raw: &str, _: &mut Vec<String>) -> Result<i64, String> {
        let v = parse::extract_block(raw)?;
        v["n"].as_i64().ok_or_else(|| "missing n".to_string())
    }

    #[test]
    fn first_reply_parses() {
        let gw = ctx_with(MockBackend::new().on_contains("go", r#"{"n": 4}"#));
        let params = ChatParams::default();
        let ctx = AgentContext::new(&gw, "m", &params);
        let out = run_structured(&ctx, AgentKind::Detector, vec![ChatMessage::user("go")], parse_num).unwrap();
        assert_eq!(out.parsed, 4);
        assert_eq!(out.repair_attempts, 0);
        assert_eq!(out.exchanges.len(), 1);
    }

    #[test]
    fn repair_with_error_then_block_only() {
        let gw = ctx_with(
            MockBackend::new()
                .on_contains("Emit only the ```json block", "```json\n{\"n\": 7}\n```")
                .on_contains("could not be parsed", "still garbage")
                .on_contains("go", "garbage"),
        );
        let params = ChatParams::default();
        let ctx = AgentContext::new(&gw, "m", &params);
        let out = run_structured(&ctx, AgentKind::Judge, vec![ChatMessage::user("go")], parse_num).unwrap();
        assert_eq!(out.parsed, 7);
        assert_eq!(out.repair_attempts, 2);
        assert_eq!(out.exchanges.len(), 3);
        let second = &out.exchanges[1].request.messages;
        assert_eq!(second[1].content, "garbage");
        assert!(second[2].content.contains("could not be parsed"));
    }

    #[test]
    fn gives_up_after_two_repairs() {
        let gw = ctx_with(MockBackend::new().on_contains("go", "nope"));
        let params = ChatParams::default();
        let ctx = AgentContext::new(&gw, "m", &params);
        let err = run_structured(&ctx, AgentKind::Consis, vec![ChatMessage::user("go")], parse_num).unwrap_err();
        assert!(matches!(err.kind, AgentErrorKind::Unparsable { repairs: 2, .. }));
        assert_eq!(err.exchanges.len(), 3);
    }
}
