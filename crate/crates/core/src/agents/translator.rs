use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{parse, prompts, run_structured, AgentContext, AgentError, AgentKind, AgentOutput};
use crate::gateway::ChatMessage;
use crate::retrieval::RetrievedDocument;
use crate::text::{truncate_chars, LangPair};
use crate::transkg::TransKG;

/// How much graph content the translator prompt may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeBudget {
    pub max_triples: usize,
    pub max_documents: usize,
    pub max_excerpt_chars: usize,
}

impl Default for KnowledgeBudget {
    fn default() -> Self {
        Self {
            max_triples: 20,
            max_documents: 3,
            max_excerpt_chars: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationOutput {
    pub translation: String,
    /// Rendering used at each occurrence of each requested term, when the
    /// model reported it.
    pub term_renderings: Option<BTreeMap<String, Vec<String>>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Renderings {
    Many(Vec<String>),
    One(String),
}

#[derive(Deserialize)]
struct TranslatorReply {
    translation: String,
    #[serde(default)]
    term_renderings: Option<BTreeMap<String, Renderings>>,
}

fn knowledge_section(graph: &TransKG, docs: &[RetrievedDocument], budget: &KnowledgeBudget) -> String {
    let internal: Vec<_> = graph.internal_triples().take(budget.max_triples).collect();
    let external: Vec<_> = graph
        .external_triples()
        .take(budget.max_triples - internal.len())
        .collect();
    let excerpts: Vec<_> = graph
        .accepted_docs
        .iter()
        .filter_map(|id| docs.iter().find(|d| &d.id == id))
        .take(budget.max_documents)
        .collect();
    if internal.is_empty() && external.is_empty() && excerpts.is_empty() {
        return String::new();
    }

    let mut s = String::from("Knowledge about difficult terms in this text:\n");
    if !internal.is_empty() {
        s.push_str("Facts from the source text:\n");
        for t in &internal {
            s.push_str(&format!("- {}\n", t.display()));
        }
    }
    if !external.is_empty() {
        s.push_str("Facts from verified external sources:\n");
        for t in &external {
            s.push_str(&format!("- {}\n", t.display()));
        }
    }
    if !excerpts.is_empty() {
        s.push_str("Reference documents:\n");
        for d in &excerpts {
            s.push_str(&format!(
                "[{}] {}\n{}\n",
                d.id,
                d.title,
                truncate_chars(&d.text, budget.max_excerpt_chars)
            ));
        }
    }
    s.push('\n');
    s
}

/// Builds the translator prompt. Knowledge (internal triples, then external
/// triples, then accepted-document excerpts, all within `budget`) precedes
/// the source text; an empty graph yields a plain translation prompt.
pub fn build_translator_messages(
    source_text: &str,
    graph: &TransKG,
    docs: &[RetrievedDocument],
    pair: LangPair,
    budget: &KnowledgeBudget,
) -> Vec<ChatMessage> {
    let rendering_request = if graph.nodes.is_empty() {
        String::new()
    } else {
        let list: Vec<String> = graph.nodes.keys().map(|k| format!("- {k}")).collect();
        format!(
            "Report in term_renderings how you rendered each occurrence of these terms:\n{}\n\n",
            list.join("\n")
        )
    };
    let vars = BTreeMap::from([
        ("knowledge_section", knowledge_section(graph, docs, budget)),
        ("rendering_request", rendering_request),
        ("source_lang", pair.source.name().to_string()),
        ("target_lang", pair.target.name().to_string()),
        ("source_text", source_text.to_string()),
    ]);
    prompts::TRANSLATOR.render(&vars).expect("translator template")
}

/// Produces the final translation conditioned on `graph`.
pub fn translate_with_knowledge(
    ctx: &AgentContext<'_>,
    source_text: &str,
    graph: &TransKG,
    docs: &[RetrievedDocument],
    pair: LangPair,
    budget: &KnowledgeBudget,
) -> Result<AgentOutput<TranslationOutput>, AgentError> {
    let messages = build_translator_messages(source_text, graph, docs, pair, budget);
    run_structured(ctx, AgentKind::Translator, messages, |raw, _| {
        let reply: TranslatorReply = parse::parse_block(raw)?;
        let translation = reply.translation.trim().to_string();
        if translation.is_empty() {
            return Err("empty translation".into());
        }
        let term_renderings = reply.term_renderings.map(|m| {
            m.into_iter()
                .map(|(k, v)| {
                    let list = match v {
                        Renderings::Many(v) => v,
                        Renderings::One(s) => vec![s],
                    };
                    (k, list)
                })
                .collect()
        });
        Ok(TranslationOutput { translation, term_renderings })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentErrorKind, JudgeVerdict, Verdict};
    use crate::gateway::{ChatParams, Gateway, MockBackend};
    use crate::retrieval::DocumentSource;
    use crate::text::{CharSpan, Lang};
    use crate::transkg::{KnowledgeTriple, TermCandidate, TermCategory};

    fn pair() -> LangPair {
        LangPair::new(Lang::En, Lang::Zh)
    }

    fn graph_with_knowledge(n_internal: usize, n_docs: usize) -> (TransKG, Vec<RetrievedDocument>) {
        let term = TermCandidate {
            surface: "bank".into(),
            span: CharSpan::new(0, 4),
            category: TermCategory::Polyseme,
            rationale: String::new(),
        };
        let mut g = TransKG::new("d", &[term]);
        let internal: Vec<_> = (0..n_internal)
            .map(|i| KnowledgeTriple::internal("bank", "fact", &format!("f{i}"), ["bank"]))
            .collect();
        g = g.add_internal(&internal).unwrap();
        let mut docs = Vec::new();
        for i in 0..n_docs {
            let d = RetrievedDocument {
                id: format!("doc{i}"),
                title: format!("title {i}"),
                text: "x".repeat(800),
                source: DocumentSource::LocalIndex,
                score: 1.0,
            };
            let v = JudgeVerdict {
                doc_id: d.id.clone(),
                term: "bank".into(),
                verdict: Verdict::Correct,
                proposed_rendering: String::new(),
                back_translation: String::new(),
                alignment_rationale: String::new(),
            };
            let t = KnowledgeTriple::external("bank", "ext", &format!("e{i}"), &d.id, ["bank"]);
            g = g.integrate_external(&d, &v, &[t]).unwrap();
            docs.push(d);
        }
        (g, docs)
    }

    #[test]
    fn empty_graph_has_no_knowledge_section() {
        let msgs = build_translator_messages("hello", &TransKG::new("d", &[]), &[], pair(), &KnowledgeBudget::default());
        assert!(msgs[1].content.starts_with("Translate the following English text into Chinese."));
        assert!(!msgs[1].content.contains("Knowledge"));
    }

    #[test]
    fn budget_limits_knowledge() {
        let (g, docs) = graph_with_knowledge(18, 5);
        let msgs = build_translator_messages("the bank", &g, &docs, pair(), &KnowledgeBudget::default());
        let user = &msgs[1].content;
        let facts = user.lines().filter(|l| l.starts_with("- bank | ")).count();
        assert_eq!(facts, 20);
        assert!(user.contains("- bank | ext | e1"));
        assert!(!user.contains("- bank | ext | e2"));
        assert_eq!(user.matches("[doc").count(), 3);
        let excerpt = user.lines().find(|l| l.starts_with('x')).unwrap();
        assert_eq!(excerpt.chars().count(), 501); // 500 + ellipsis
        // knowledge precedes the source
        assert!(user.find("Knowledge").unwrap() < user.find("Text:\nthe bank").unwrap());
    }

    #[test]
    fn internal_triples_take_priority() {
        let (g, docs) = graph_with_knowledge(25, 1);
        let msgs = build_translator_messages("the bank", &g, &docs, pair(), &KnowledgeBudget::default());
        assert!(!msgs[1].content.contains("external sources"));
        assert!(msgs[1].content.contains("- bank | fact | f19"));
        assert!(!msgs[1].content.contains("- bank | fact | f20"));
    }

    fn run(reply: &str) -> Result<AgentOutput<TranslationOutput>, AgentError> {
        let mut gw = Gateway::new();
        gw.register_mock("m", MockBackend::new().on_contains("Translate the following", reply))
            .unwrap();
        let params = ChatParams::default();
        let ctx = AgentContext::new(&gw, "m", &params);
        translate_with_knowledge(&ctx, "the bank", &TransKG::new("d", &[]), &[], pair(), &KnowledgeBudget::default())
    }

    #[test]
    fn parses_translation_and_renderings() {
        let out = run(r#"{"translation": "河岸", "term_renderings": {"bank": "河岸", "Gaemi": ["格美", "格美"]}}"#).unwrap();
        assert_eq!(out.parsed.translation, "河岸");
        let r = out.parsed.term_renderings.unwrap();
        assert_eq!(r["bank"], vec!["河岸"]);
        assert_eq!(r["Gaemi"].len(), 2);
    }

    #[test]
    fn empty_translation_is_an_error() {
        let err = run(r#"{"translation": "  "}"#).unwrap_err();
        assert!(matches!(err.kind, AgentErrorKind::Unparsable { .. }));
    }
}
