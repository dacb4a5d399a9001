use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use super::{parse, prompts, run_structured, term_bullets, AgentContext, AgentError, AgentKind, AgentOutput};
use crate::text::LangPair;
use crate::transkg::{KnowledgeTriple, TermCandidate};

#[derive(Deserialize)]
struct ExtractorReply {
    triples: Vec<ReportedTriple>,
}

#[derive(Deserialize)]
pub(crate) struct ReportedTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
    #[serde(default)]
    pub terms: Vec<String>,
}

/// Extracts internal (source-text) knowledge about `terms`.
///
/// With no terms the gateway is not called. Triples that cite unknown terms,
/// cite no term, or have an empty component are dropped with a warning.
pub fn extract_internal_knowledge(
    ctx: &AgentContext<'_>,
    source_text: &str,
    terms: &[TermCandidate],
    pair: LangPair,
) -> Result<AgentOutput<Vec<KnowledgeTriple>>, AgentError> {
    if terms.is_empty() {
        return Ok(AgentOutput {
            agent: AgentKind::Extractor,
            raw_text: String::new(),
            parsed: Vec::new(),
            repair_attempts: 0,
            exchanges: Vec::new(),
            warnings: Vec::new(),
        });
    }
    let known: BTreeSet<&str> = terms.iter().map(|t| t.surface.as_str()).collect();
    let vars = BTreeMap::from([
        ("source_lang", pair.source.name().to_string()),
        ("term_list", term_bullets(known.iter().copied())),
        ("source_text", source_text.to_string()),
    ]);
    let messages = prompts::EXTRACTOR.render(&vars).expect("extractor template");
    run_structured(ctx, AgentKind::Extractor, messages, |raw, warnings| {
        let reply: ExtractorReply = parse::parse_block(raw)?;
        let mut out = Vec::new();
        for t in reply.triples {
            let display = format!("{} | {} | {}", t.subject, t.relation, t.object);
            if let Some(bad) = t.terms.iter().find(|k| !known.contains(k.as_str())) {
                warnings.push(format!("triple ({display}) cites unknown term `{bad}`; dropped"));
                continue;
            }
            if t.terms.is_empty() {
                warnings.push(format!("triple ({display}) cites no term; dropped"));
                continue;
            }
            if [&t.subject, &t.relation, &t.object].iter().any(|s| s.trim().is_empty()) {
                warnings.push(format!("triple ({display}) has an empty component; dropped"));
                continue;
            }
            out.push(KnowledgeTriple::internal(
                t.subject.trim(),
                t.relation.trim(),
                t.object.trim(),
                t.terms,
            ));
        }
        Ok(out)
    })
}
