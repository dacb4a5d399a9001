use std::collections::BTreeMap;

use serde::Deserialize;

use super::{parse, prompts, run_structured, AgentContext, AgentError, AgentErrorKind, AgentKind, AgentOutput};
use crate::text::{find_char_span, LangPair};
use crate::transkg::{TermCandidate, TermCategory};

#[derive(Deserialize)]
struct DetectorReply {
    terms: Vec<ReportedTerm>,
}

#[derive(Deserialize)]
struct ReportedTerm {
    surface: String,
    category: String,
    #[serde(default)]
    rationale: String,
}

/// Asks the detector for translation-risky terms and anchors each one in the
/// source text.
///
/// Surfaces are anchored at their first whole-word occurrence; surfaces that
/// do not occur are dropped with a warning. The result is sorted by span start
/// and overlapping spans are merged in favour of the longer one.
pub fn detect_unknown_terms(
    ctx: &AgentContext<'_>,
    source_text: &str,
    pair: LangPair,
) -> Result<AgentOutput<Vec<TermCandidate>>, AgentError> {
    if source_text.trim().is_empty() {
        return Err(AgentError::new(
            AgentKind::Detector,
            AgentErrorKind::InvalidInput("source text is empty".into()),
            Vec::new(),
        ));
    }
    let vars = BTreeMap::from([
        ("source_lang", pair.source.name().to_string()),
        ("target_lang", pair.target.name().to_string()),
        ("source_text", source_text.to_string()),
    ]);
    let messages = prompts::DETECTOR.render(&vars).expect("detector template");
    run_structured(ctx, AgentKind::Detector, messages, |raw, warnings| {
        let reply: DetectorReply = parse::parse_block(raw)?;
        let mut reported = Vec::with_capacity(reply.terms.len());
        for t in reply.terms {
            let category = TermCategory::parse_loose(&t.category)
                .ok_or_else(|| format!("unknown category `{}` for term `{}`", t.category, t.surface))?;
            reported.push((t.surface, category, t.rationale));
        }
        Ok(anchor_terms(source_text, reported, warnings))
    })
}

/// Locates reported surfaces in `source` and resolves overlaps.
pub(crate) fn anchor_terms(
    source: &str,
    reported: Vec<(String, TermCategory, String)>,
    warnings: &mut Vec<String>,
) -> Vec<TermCandidate> {
    let mut located: Vec<TermCandidate> = Vec::new();
    for (surface, category, rationale) in reported {
        let surface = surface.trim().to_string();
        match find_char_span(source, &surface) {
            Some(span) => located.push(TermCandidate { surface, span, category, rationale }),
            None => warnings.push(format!("detector term `{surface}` not found in source; dropped")),
        }
    }
    // start ascending, longer first; stable so report order breaks full ties
    located.sort_by(|a, b| a.span.start.cmp(&b.span.start).then(b.span.len().cmp(&a.span.len())));
    let mut merged: Vec<TermCandidate> = Vec::new();
    for cand in located {
        match merged.last_mut() {
            Some(prev) if prev.span.overlaps(&cand.span) => {
                if cand.span.len() > prev.span.len() {
                    *prev = cand;
                }
            }
            _ => merged.push(cand),
        }
    }
    merged
}
