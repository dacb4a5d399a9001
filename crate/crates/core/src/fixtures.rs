//! Synthetic fixtures: the bank/Scotia ambiguity and an inconsistent-rendering
//! case, served by rule-based mock agents.
//!
//! The bank/Scotia backend answers all five prompt kinds. Its judge compares
//! context cues in the source text with the sense described by a document;
//! its translator renders each term with the first rendering found among the
//! reference documents in its prompt and falls back to the financial sense.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;

use crate::gateway::{ChatRequest, Gateway, Matcher, MockBackend, Reply};
use crate::pipeline::{Pipeline, PipelineConfig, PipelineMode, RoleBackends, SourceDocument};
use crate::retrieval::{EvidenceSource, GlossarySource};
use crate::text::{count_occurrences, Lang, LangPair};

pub const BANK_SCOTIA_BACKEND: &str = "bank-scotia";

pub const FINANCIAL_TEXT: &str = "Scotia offers a new savings plan, so I opened an account at the bank.";
pub const GEOGRAPHIC_TEXT: &str =
    "The boat drifted down the river and stopped at the bank. Children fished from the bank all afternoon.";

pub const BANK_SCOTIA_GLOSSARY: &str = "\
# source\ttarget\tnote
Scotia\t丰业银行\tScotiabank, a Canadian bank that offers savings plans and accounts
Scotia\t斯科舍海\tthe Scotia Sea, a sea between the Southern Ocean and the South Atlantic
bank\t银行\ta financial institution that holds savings and accounts
bank\t河岸\tthe land alongside a river or sea
";

pub const GAEMI_BACKEND: &str = "gaemi";
pub const GAEMI_TEXT: &str = "Typhoon Gaemi hit Taiwan on Wednesday. Gaemi then moved toward China.";

const FINANCIAL_CUES: &[&str] = &["savings", "account", "loan", "deposit", "money", "offers"];
const GEOGRAPHIC_CUES: &[&str] = &["river", "boat", "ship", "sea", "fished", "shore", "penguins"];

const DEFAULT_RENDERINGS: &[(&str, &str)] = &[("bank", "银行"), ("Scotia", "斯科舍")];

/// Canned Chinese sentences with `{term}` slots.
const SENTENCES: &[(&str, &str)] = &[
    (
        "Scotia offers a new savings plan, so I opened an account at the bank.",
        "{Scotia}推出了新的储蓄计划，所以我在{bank}开了一个账户。",
    ),
    ("The boat drifted down the river and stopped at the bank.", "小船顺流而下，停在了{bank}。"),
    ("Children fished from the bank all afternoon.", "孩子们整个下午都在{bank}钓鱼。"),
];

const KNOWN_TERMS: &[(&str, &str, &str)] = &[
    ("Scotia", "proper_noun", "organization or place name"),
    ("bank", "polyseme", "financial institution or riverside"),
];

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Sense {
    Financial,
    Geographic,
}

fn sense_of(text: &str) -> Option<Sense> {
    let lower = text.to_lowercase();
    let fin = FINANCIAL_CUES.iter().filter(|c| lower.contains(*c)).count();
    let geo = GEOGRAPHIC_CUES.iter().filter(|c| lower.contains(*c)).count();
    match fin.cmp(&geo) {
        std::cmp::Ordering::Greater => Some(Sense::Financial),
        std::cmp::Ordering::Less => Some(Sense::Geographic),
        std::cmp::Ordering::Equal => None,
    }
}

/// Text after the first line equal to `header`, up to the next blank line.
fn block_after<'a>(text: &'a str, header: &str) -> Option<&'a str> {
    let start = text.find(&format!("{header}\n"))? + header.len() + 1;
    let rest = &text[start..];
    Some(rest.split("\n\n").next().unwrap_or(rest))
}

fn user(req: &ChatRequest) -> &str {
    req.last_user_message().unwrap_or("")
}

fn detector_reply(req: &ChatRequest) -> Option<String> {
    let text = block_after(user(req), "Text:")?;
    let terms: Vec<_> = KNOWN_TERMS
        .iter()
        .filter(|(s, _, _)| count_occurrences(text, s) > 0)
        .map(|(s, c, r)| json!({"surface": s, "category": c, "rationale": r}))
        .collect();
    Some(json!({ "terms": terms }).to_string())
}

fn extractor_reply(req: &ChatRequest) -> Option<String> {
    let text = block_after(user(req), "Text:")?;
    let mut triples = Vec::new();
    if text.contains("Scotia offers a new savings plan") {
        triples.push(json!({"subject": "Scotia", "relation": "offers", "object": "savings plan", "terms": ["Scotia"]}));
    }
    if text.contains("opened an account at the bank") {
        triples.push(json!({"subject": "account", "relation": "opened at", "object": "bank", "terms": ["bank"]}));
    }
    if text.contains("stopped at the bank") {
        triples.push(json!({"subject": "boat", "relation": "stopped at", "object": "bank", "terms": ["bank"]}));
    }
    Some(json!({ "triples": triples }).to_string())
}

/// Fact the judge reports for a CORRECT document, keyed by target rendering.
fn judge_fact(rendering: &str) -> Option<(&'static str, &'static str, &'static str)> {
    match rendering {
        "丰业银行" => Some(("Scotia", "is a", "bank")),
        "斯科舍海" => Some(("Scotia", "is a", "sea")),
        "银行" => Some(("bank", "is a", "financial institution")),
        "河岸" => Some(("bank", "is", "land alongside a river")),
        _ => None,
    }
}

fn judge_reply(req: &ChatRequest) -> Option<String> {
    let u = user(req);
    let i = u.find("Source text (")?;
    let line_end = u[i..].find('\n')? + i + 1;
    let source = u[line_end..].split("\n\n").next().unwrap_or("");
    let doc_start = u.find("Retrieved document [")?;
    let doc_body = u[doc_start..].split_once('\n')?.1;
    let (rendering, note) = doc_body
        .split_once(" → ")
        .map(|(_, rest)| rest.split_once(": ").unwrap_or((rest, "")))
        .unwrap_or(("", doc_body));
    let context = sense_of(source);
    let doc_sense = sense_of(note).or_else(|| sense_of(doc_body));
    let correct = context.is_some() && context == doc_sense;
    let mut reply = json!({
        "proposed_rendering": rendering.trim(),
        "back_translation": note.trim(),
        "alignment_rationale": format!("source context {:?}, document sense {:?}", context, doc_sense),
        "verdict": if correct { "CORRECT" } else { "INCORRECT" },
        "triples": [],
    });
    if correct {
        if let Some((s, r, o)) = judge_fact(rendering.trim()) {
            reply["triples"] = json!([{"subject": s, "relation": r, "object": o}]);
        }
    }
    Some(reply.to_string())
}

/// Rendering per term: the first `term → rendering` line among the reference
/// documents, else the default.
fn renderings_from_prompt(u: &str, terms: &[String]) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    if let Some(start) = u.find("Reference documents:\n") {
        let refs = &u[start..u.find("Translate the following").unwrap_or(u.len())];
        for line in refs.lines() {
            if let Some((term, rest)) = line.split_once(" → ") {
                let rendering = rest.split(':').next().unwrap_or(rest).trim();
                out.entry(term.trim().to_string()).or_insert_with(|| rendering.to_string());
            }
        }
    }
    for t in terms {
        if !out.contains_key(t) {
            let default = DEFAULT_RENDERINGS.iter().find(|(s, _)| s == t).map(|(_, r)| *r);
            out.insert(t.clone(), default.unwrap_or(t).to_string());
        }
    }
    out
}

fn requested_terms(u: &str) -> Vec<String> {
    block_after(u, "Report in term_renderings how you rendered each occurrence of these terms:")
        .map(|b| b.lines().filter_map(|l| l.strip_prefix("- ")).map(str::to_string).collect())
        .unwrap_or_default()
}

fn translator_reply(req: &ChatRequest) -> Option<String> {
    let u = user(req);
    let text = block_after(u, "Text:")?;
    let requested = requested_terms(u);
    let all_terms: Vec<String> = KNOWN_TERMS
        .iter()
        .map(|(s, _, _)| s.to_string())
        .chain(requested.iter().cloned())
        .collect();
    let renderings = renderings_from_prompt(u, &all_terms);

    let mut translation = String::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        if let Some((src, tgt)) = SENTENCES.iter().find(|(s, _)| rest.starts_with(s)) {
            let mut zh = tgt.to_string();
            for (term, r) in &renderings {
                zh = zh.replace(&format!("{{{term}}}"), r);
            }
            translation.push_str(&zh);
            rest = rest[src.len()..].trim_start();
        } else {
            // unknown text: substitute term renderings in place
            let mut s = rest.to_string();
            for t in &requested {
                s = s.replace(t.as_str(), &renderings[t]);
            }
            translation.push_str(&s);
            break;
        }
    }
    let term_renderings: BTreeMap<&str, Vec<&str>> = requested
        .iter()
        .map(|t| (t.as_str(), vec![renderings[t].as_str(); count_occurrences(text, t)]))
        .collect();
    Some(json!({ "translation": translation, "term_renderings": term_renderings }).to_string())
}

fn consis_reply(req: &ChatRequest) -> Option<String> {
    let u = user(req);
    let source = block_after(u, "Source text:")?;
    let candidate = block_after(u, "Candidate translation:")?;
    let terms: Vec<&str> = block_after(u, "Unknown terms:")
        .map(|b| b.lines().filter_map(|l| l.strip_prefix("- ")).collect())
        .unwrap_or_default();
    let wrong_sense = sense_of(source) == Some(Sense::Geographic) && candidate.contains("银行");
    let findings: Vec<_> = terms
        .iter()
        .map(|t| {
            let bad = wrong_sense && *t == "bank";
            json!({"surface": t, "consistent": !bad, "note": if bad { "financial sense in a geographic context" } else { "" }})
        })
        .collect();
    let score = if wrong_sense { 40 } else { 90 };
    Some(json!({ "score": score, "findings": findings }).to_string())
}

/// Rule-based backend for the bank/Scotia fixture.
pub fn bank_scotia_backend() -> MockBackend {
    fn dynamic(f: fn(&ChatRequest) -> Option<String>) -> Reply {
        Reply::Dynamic(Arc::new(f))
    }
    MockBackend::new()
        .rule(Matcher::Contains("Identify unknown terms".into()), dynamic(detector_reply))
        .rule(Matcher::Contains("Extract knowledge triples".into()), dynamic(extractor_reply))
        .rule(Matcher::Contains("Judge whether the retrieved document".into()), dynamic(judge_reply))
        .rule(Matcher::Contains("Evaluate this".into()), dynamic(consis_reply))
        .rule(Matcher::Contains("Translate the following".into()), dynamic(translator_reply))
}

pub fn bank_scotia_glossary() -> GlossarySource {
    GlossarySource::parse(BANK_SCOTIA_BACKEND, BANK_SCOTIA_GLOSSARY).expect("fixture glossary parses")
}

pub fn en_zh() -> LangPair {
    LangPair::new(Lang::En, Lang::Zh)
}

pub fn financial_doc() -> SourceDocument {
    SourceDocument::new("bank-financial", FINANCIAL_TEXT)
}

pub fn geographic_doc() -> SourceDocument {
    SourceDocument::new("bank-geographic", GEOGRAPHIC_TEXT)
}

pub fn bank_scotia_gateway() -> Gateway {
    let mut gw = Gateway::new();
    gw.register_mock(BANK_SCOTIA_BACKEND, bank_scotia_backend())
        .expect("fresh gateway");
    gw
}

/// Pipeline over the fixture backend and glossary in the given mode.
pub fn bank_scotia_pipeline(mode: PipelineMode) -> Pipeline {
    let sources: Vec<Box<dyn EvidenceSource>> = vec![Box::new(bank_scotia_glossary())];
    let config = PipelineConfig::new(RoleBackends::all(BANK_SCOTIA_BACKEND)).with_mode(mode);
    Pipeline::new(bank_scotia_gateway(), sources, config).expect("fixture pipeline")
}

/// Backend whose translator renders "Gaemi" two different ways.
pub fn gaemi_backend() -> MockBackend {
    MockBackend::new()
        .on_contains(
            "Identify unknown terms",
            r#"{"terms": [{"surface": "Gaemi", "category": "proper_noun", "rationale": "typhoon name"}]}"#,
        )
        .on_contains(
            "Extract knowledge triples",
            r#"{"triples": [{"subject": "Gaemi", "relation": "is a", "object": "typhoon", "terms": ["Gaemi"]}]}"#,
        )
        .on_contains(
            "Translate the following",
            r#"{"translation": "台风卡米周三袭击台湾。盖米随后向中国移动。", "term_renderings": {"Gaemi": ["卡米", "盖米"]}}"#,
        )
}

pub fn gaemi_pipeline() -> Pipeline {
    let mut gw = Gateway::new();
    gw.register_mock(GAEMI_BACKEND, gaemi_backend()).expect("fresh gateway");
    Pipeline::new(gw, Vec::new(), PipelineConfig::new(RoleBackends::all(GAEMI_BACKEND))).expect("fixture pipeline")
}

pub fn gaemi_doc() -> SourceDocument {
    SourceDocument::new("gaemi", GAEMI_TEXT)
}
