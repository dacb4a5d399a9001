use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::extractor::ReportedTriple;
use super::{parse, prompts, run_structured, AgentContext, AgentKind};
use crate::gateway::ChatExchange;
use crate::retrieval::RetrievedDocument;
use crate::text::{truncate_chars, LangPair};
use crate::transkg::{KnowledgeTriple, TermCandidate};

/// Characters of document text shown to the judge.
const DOC_CHARS: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Correct,
    Incorrect,
}

impl Verdict {
    /// Accepts `CORRECT`, `[correct]` and similar spellings.
    pub fn parse(token: &str) -> Option<Verdict> {
        let t = token.trim().trim_matches(['[', ']']).trim().to_ascii_uppercase();
        match t.as_str() {
            "CORRECT" => Some(Verdict::Correct),
            "INCORRECT" => Some(Verdict::Incorrect),
            _ => None,
        }
    }
}

/// The judge's ruling on one (term, document) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub doc_id: String,
    pub term: String,
    pub verdict: Verdict,
    /// Target-language rendering of the term assuming the document is true.
    pub proposed_rendering: String,
    pub back_translation: String,
    pub alignment_rationale: String,
}

/// Verdict plus the external triples to attach when it is CORRECT.
#[derive(Debug, Clone)]
pub struct JudgeOutcome {
    pub verdict: JudgeVerdict,
    pub triples: Vec<KnowledgeTriple>,
    pub exchanges: Vec<ChatExchange>,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct JudgeReply {
    #[serde(default)]
    proposed_rendering: String,
    #[serde(default)]
    back_translation: String,
    #[serde(default)]
    alignment_rationale: String,
    verdict: Option<String>,
    #[serde(default)]
    triples: Vec<ReportedTriple>,
}

/// Rules whether `doc` explains `term` in the context of `source_text`.
///
/// Fail-closed: a reply that never yields a verdict, or a failed gateway call,
/// becomes INCORRECT so unverified evidence never reaches the graph.
pub fn judge_document(
    ctx: &AgentContext<'_>,
    internal_knowledge: &[KnowledgeTriple],
    doc: &RetrievedDocument,
    source_text: &str,
    term: &TermCandidate,
    pair: LangPair,
) -> JudgeOutcome {
    let knowledge: Vec<String> = internal_knowledge
        .iter()
        .filter(|t| t.term_keys.contains(&term.surface))
        .map(|t| format!("- {}", t.display()))
        .collect();
    let vars = BTreeMap::from([
        ("source_lang", pair.source.name().to_string()),
        ("target_lang", pair.target.name().to_string()),
        ("term", term.surface.clone()),
        ("source_text", source_text.to_string()),
        (
            "internal_knowledge",
            if knowledge.is_empty() { "(none)".to_string() } else { knowledge.join("\n") },
        ),
        ("doc_id", doc.id.clone()),
        ("doc_title", doc.title.clone()),
        ("doc_text", truncate_chars(&doc.text, DOC_CHARS)),
    ]);
    let messages = prompts::JUDGE.render(&vars).expect("judge template");
    let result = run_structured(ctx, AgentKind::Judge, messages, |raw, _| {
        let reply: JudgeReply = parse::parse_block(raw)?;
        let token = reply.verdict.as_deref().ok_or("missing verdict")?;
        let verdict = Verdict::parse(token).ok_or_else(|| format!("invalid verdict `{token}`"))?;
        Ok((verdict, reply))
    });

    match result {
        Ok(out) => {
            let (verdict, reply) = out.parsed;
            let mut warnings = out.warnings;
            let triples = if verdict == Verdict::Correct {
                reply
                    .triples
                    .into_iter()
                    .filter_map(|t| {
                        if [&t.subject, &t.relation, &t.object].iter().any(|s| s.trim().is_empty()) {
                            warnings.push(format!("judge triple for `{}` has an empty component; dropped", doc.id));
                            return None;
                        }
                        Some(KnowledgeTriple::external(
                            t.subject.trim(),
                            t.relation.trim(),
                            t.object.trim(),
                            &doc.id,
                            [term.surface.clone()],
                        ))
                    })
                    .collect()
            } else {
                Vec::new()
            };
            JudgeOutcome {
                verdict: JudgeVerdict {
                    doc_id: doc.id.clone(),
                    term: term.surface.clone(),
                    verdict,
                    proposed_rendering: reply.proposed_rendering,
                    back_translation: reply.back_translation,
                    alignment_rationale: reply.alignment_rationale,
                },
                triples,
                exchanges: out.exchanges,
                warnings,
            }
        }
        Err(err) => {
            let rationale = match &err.kind {
                super::AgentErrorKind::Unparsable { .. } => "unparsable".to_string(),
                other => format!("judge call failed: {other}"),
            };
            JudgeOutcome {
                verdict: JudgeVerdict {
                    doc_id: doc.id.clone(),
                    term: term.surface.clone(),
                    verdict: Verdict::Incorrect,
                    proposed_rendering: String::new(),
                    back_translation: String::new(),
                    alignment_rationale: rationale,
                },
                triples: Vec::new(),
                warnings: vec![format!("judge failed closed on `{}` for `{}`: {err}", doc.id, term.surface)],
                exchanges: err.exchanges,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatParams, Gateway, MockBackend};
    use crate::retrieval::DocumentSource;
    use crate::text::{find_char_span, Lang};
    use crate::transkg::TermCategory;

    const SRC: &str = "Scotia offers a new savings plan at the bank.";

    fn doc(id: &str, text: &str) -> RetrievedDocument {
        RetrievedDocument {
            id: id.into(),
            title: id.into(),
            text: text.into(),
            source: DocumentSource::Glossary,
            score: 1.0,
        }
    }

    fn scotia() -> TermCandidate {
        TermCandidate {
            surface: "Scotia".into(),
            span: find_char_span(SRC, "Scotia").unwrap(),
            category: TermCategory::ProperNoun,
            rationale: String::new(),
        }
    }

    fn judge_with(mock: MockBackend, d: &RetrievedDocument) -> JudgeOutcome {
        let mut gw = Gateway::new();
        gw.register_mock("m", mock).unwrap();
        let params = ChatParams::default();
        let ctx = AgentContext::new(&gw, "m", &params);
        judge_document(&ctx, &[], d, SRC, &scotia(), LangPair::new(Lang::En, Lang::Zh))
    }

    #[test]
    fn verdict_tokens() {
        assert_eq!(Verdict::parse("[CORRECT]"), Some(Verdict::Correct));
        assert_eq!(Verdict::parse(" incorrect "), Some(Verdict::Incorrect));
        assert_eq!(Verdict::parse("maybe"), None);
    }

    #[test]
    fn correct_verdict_carries_triples() {
        let reply = r#"```json
{"proposed_rendering": "丰业银行", "back_translation": "Scotiabank", "alignment_rationale": "financial in both",
 "verdict": "CORRECT", "triples": [{"subject": "Scotia", "relation": "is a", "object": "bank"}]}
```"#;
        let d = doc("d1", "Scotiabank is a Canadian bank offering savings plans.");
        let out = judge_with(MockBackend::new().on_contains("Judge whether", reply), &d);
        assert_eq!(out.verdict.verdict, Verdict::Correct);
        assert_eq!(out.verdict.proposed_rendering, "丰业银行");
        assert_eq!(
            out.triples,
            vec![KnowledgeTriple::external("Scotia", "is a", "bank", "d1", ["Scotia"])]
        );
    }

    #[test]
    fn incorrect_verdict_drops_triples() {
        let reply = r#"{"verdict": "[INCORRECT]", "triples": [{"subject": "Scotia", "relation": "is a", "object": "sea"}]}"#;
        let d = doc("d2", "The Scotia Sea lies in the Southern Ocean.");
        let out = judge_with(MockBackend::new().on_contains("Judge whether", reply), &d);
        assert_eq!(out.verdict.verdict, Verdict::Incorrect);
        assert!(out.triples.is_empty());
    }

    #[test]
    fn garbage_fails_closed() {
        let d = doc("d3", "whatever");
        let out = judge_with(MockBackend::new().on_contains("Judge whether", "I think it is fine"), &d);
        assert_eq!(out.verdict.verdict, Verdict::Incorrect);
        assert_eq!(out.verdict.alignment_rationale, "unparsable");
        assert_eq!(out.exchanges.len(), 3);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn gateway_failure_fails_closed() {
        let d = doc("d4", "whatever");
        let out = judge_with(MockBackend::new(), &d);
        assert_eq!(out.verdict.verdict, Verdict::Incorrect);
        assert!(out.verdict.alignment_rationale.starts_with("judge call failed"));
    }

    #[test]
    fn prompt_carries_protocol_and_document() {
        let d = doc("d9", "Scotiabank text");
        let out = judge_with(MockBackend::new().on_contains("Judge whether", r#"{"verdict": "CORRECT"}"#), &d);
        let msgs = &out.exchanges[0].request.messages;
        assert!(msgs[0].content.contains("back into English"));
        assert!(msgs[1].content.contains("Retrieved document [d9]"));
        assert!(msgs[1].content.contains("Term: Scotia"));
    }
}
