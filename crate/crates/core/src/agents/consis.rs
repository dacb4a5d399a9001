use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{parse, prompts, run_structured, term_bullets, AgentContext, AgentError, AgentKind, AgentOutput};
use crate::text::LangPair;
use crate::transkg::TermCandidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermFinding {
    pub surface: String,
    pub judged_consistent: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsisReport {
    /// Clamped to `[0, 100]`.
    pub score: f64,
    pub term_findings: Vec<TermFinding>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Score {
    Number(f64),
    Text(String),
}

#[derive(Deserialize)]
struct ConsisReply {
    score: Score,
    #[serde(default)]
    findings: Vec<ReplyFinding>,
}

#[derive(Deserialize)]
struct ReplyFinding {
    surface: String,
    consistent: bool,
    #[serde(default)]
    note: String,
}

/// LLM-judged translation score with emphasis on the unknown terms.
pub fn consis_evaluate(
    ctx: &AgentContext<'_>,
    source_text: &str,
    candidate: &str,
    terms: &[TermCandidate],
    pair: LangPair,
) -> Result<AgentOutput<ConsisReport>, AgentError> {
    let mut seen = std::collections::BTreeSet::new();
    let surfaces: Vec<&str> = terms
        .iter()
        .map(|t| t.surface.as_str())
        .filter(|s| seen.insert(*s))
        .collect();
    let vars = BTreeMap::from([
        ("source_lang", pair.source.name().to_string()),
        ("target_lang", pair.target.name().to_string()),
        ("term_list", term_bullets(surfaces)),
        ("source_text", source_text.to_string()),
        ("candidate", candidate.to_string()),
    ]);
    let messages = prompts::CONSIS.render(&vars).expect("consis template");
    run_structured(ctx, AgentKind::Consis, messages, |raw, warnings| {
        let reply: ConsisReply = parse::parse_block(raw)?;
        let score = match reply.score {
            Score::Number(n) => n,
            Score::Text(s) => s.trim().parse::<f64>().map_err(|_| format!("score `{s}` is not a number"))?,
        };
        if !score.is_finite() {
            return Err("score is not finite".into());
        }
        let clamped = score.clamp(0.0, 100.0);
        if clamped != score {
            warnings.push(format!("CONSIS score {score} clamped to {clamped}"));
        }
        Ok(ConsisReport {
            score: clamped,
            term_findings: reply
                .findings
                .into_iter()
                .map(|f| TermFinding {
                    surface: f.surface,
                    judged_consistent: f.consistent,
                    note: f.note,
                })
                .collect(),
        })
    })
}
