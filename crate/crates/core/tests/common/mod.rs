//! Independent oracles and generators shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crat::agents::{JudgeVerdict, Verdict};
use crat::gateway::{ChatRequest, Gateway, MockBackend};
use crat::pipeline::{Pipeline, PipelineConfig, PipelineMode, RoleBackends, SourceDocument};
use crat::retrieval::{DocumentSource, EvidenceSource, RetrievalError, RetrievedDocument};
use crat::text::{find_char_span, CharSpan};
use crat::transkg::{KnowledgeTriple, TermCandidate, TermCategory, TransKG};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// BLEU oracle: n-grams as owned vectors, counted by linear scan.

fn ngrams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + n <= tokens.len() {
        out.push(tokens[i..i + n].to_vec());
        i += 1;
    }
    out
}

fn count_in(list: &[Vec<String>], g: &[String]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

/// Corpus BLEU-4 over pre-tokenized pairs, written without reference to the
/// library: clipped counts summed over the corpus, add-one on zero
/// precisions only, brevity penalty min(1, e^(1 - r/c)).
pub fn bleu_oracle(pairs: &[(Vec<String>, Vec<String>)]) -> f64 {
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (cand, reference) in pairs {
        c += cand.len();
        r += reference.len();
        for n in 1..=4 {
            let cg = ngrams(cand, n);
            let rg = ngrams(reference, n);
            totals[n - 1] += cg.len();
            let mut seen: Vec<Vec<String>> = Vec::new();
            for g in &cg {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g.clone());
                matches[n - 1] += count_in(&cg, g).min(count_in(&rg, g));
            }
        }
    }
    let bp = if c == 0 {
        if r == 0 {
            1.0
        } else {
            0.0
        }
    } else if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    if bp == 0.0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 0..4 {
        let p = if matches[n] == 0 {
            1.0 / (totals[n] as f64 + 1.0)
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        log_sum += p.ln();
    }
    100.0 * bp * (log_sum / 4.0).exp()
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

// ---------------------------------------------------------------------------
// BM25 oracle: scores every document directly from its token list.

pub struct OracleDoc {
    pub id: String,
    pub tokens: Vec<String>,
}

/// Ranks all documents containing a query term, best first, ties by id.
/// Query terms are deduplicated and summed in sorted order.
pub fn bm25_oracle(docs: &[OracleDoc], query: &[String], k: usize) -> Vec<(String, f64)> {
    let (k1, b) = (1.2, 0.75);
    let n = docs.len() as f64;
    let total: usize = docs.iter().map(|d| d.tokens.len()).sum();
    let mut avgdl = if docs.is_empty() { 0.0 } else { total as f64 / n };
    if avgdl <= 0.0 {
        avgdl = 1.0;
    }
    let mut terms: Vec<&String> = query.iter().collect();
    terms.sort();
    terms.dedup();
    let mut scored = Vec::new();
    for d in docs {
        let mut score = 0.0;
        let mut hit = false;
        for t in &terms {
            let tf = d.tokens.iter().filter(|x| x == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            hit = true;
            let df = docs.iter().filter(|o| o.tokens.contains(t)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let dl = d.tokens.len() as f64;
            score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        if hit {
            scored.push((d.id.clone(), score));
        }
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub const VOCAB: &[&str] = &[
    "bank", "river", "scotia", "savings", "plan", "sea", "account", "coffee", "phin", "filter", "typhoon", "gaemi",
    "luzon", "canal", "boat", "loan", "shore", "drip", "the", "a", "of", "and", "new", "old", "city", "water",
];

/// Random corpus of `n` documents with unique ids drawn out of order, some empty.
pub fn random_corpus(rng: &mut StdRng, n: usize) -> Vec<(String, String)> {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    ids.into_iter()
        .map(|i| {
            let len = if rng.random_bool(0.05) { 0 } else { rng.random_range(1..30) };
            let text: Vec<&str> = (0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
            (format!("d{i:03}"), text.join(" "))
        })
        .collect()
}

pub fn random_query(rng: &mut StdRng) -> Vec<String> {
    let len = rng.random_range(1..6);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.1) {
                "zzz".to_string()
            } else {
                VOCAB[rng.random_range(0..VOCAB.len())].to_string()
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Random TransKG built through the public operations.

const SURFACES: &[&str] = &["bank", "Scotia", "phin", "Gaemi", "Rach Ben Nghe", "F.B.I.", "滴滤", "\"q\""];
const WORDS: &[&str] = &["is a", "offers", "located in", "河岸", "line\nbreak", "tab\there", "ü", "", "{}", "\\"];

fn pick<'a>(rng: &mut StdRng, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

fn component(rng: &mut StdRng) -> String {
    let mut s = pick(rng, WORDS).to_string();
    if s.is_empty() {
        s.push('x');
    }
    if rng.random_bool(0.3) {
        s.push_str(&format!(" {}", rng.random_range(0..100)));
    }
    s
}

pub fn random_graph(rng: &mut StdRng) -> TransKG {
    let k = rng.random_range(0..=SURFACES.len());
    let mut surfaces: Vec<&str> = SURFACES.to_vec();
    surfaces.shuffle(rng);
    surfaces.truncate(k);
    let source = surfaces.join(" and ");
    let categories = TermCategory::ALL;
    let terms: Vec<TermCandidate> = surfaces
        .iter()
        .map(|s| TermCandidate {
            surface: s.to_string(),
            span: find_char_span(&source, s).unwrap_or(CharSpan::new(0, 0)),
            category: categories[rng.random_range(0..categories.len())],
            rationale: component(rng),
        })
        .collect();
    let mut g = TransKG::new(format!("doc-{}", rng.random_range(0..1000)), &terms);
    if terms.is_empty() {
        return g;
    }
    let internal: Vec<KnowledgeTriple> = (0..rng.random_range(0..5))
        .map(|_| {
            let key = terms[rng.random_range(0..terms.len())].surface.clone();
            KnowledgeTriple::internal(&component(rng), &component(rng), &component(rng), [key])
        })
        .collect();
    g = g.add_internal(&internal).unwrap();
    for d in 0..rng.random_range(0..5) {
        let doc = RetrievedDocument {
            id: format!("src:{d}"),
            title: component(rng),
            text: component(rng),
            source: DocumentSource::Glossary,
            score: rng.random_range(0.0..10.0),
        };
        let term = &terms[rng.random_range(0..terms.len())];
        let verdict = JudgeVerdict {
            doc_id: doc.id.clone(),
            term: term.surface.clone(),
            verdict: if rng.random_bool(0.5) { Verdict::Correct } else { Verdict::Incorrect },
            proposed_rendering: component(rng),
            back_translation: component(rng),
            alignment_rationale: component(rng),
        };
        let triples: Vec<KnowledgeTriple> = (0..rng.random_range(0..3))
            .map(|_| {
                KnowledgeTriple::external(
                    &component(rng),
                    &component(rng),
                    &component(rng),
                    &doc.id,
                    [term.surface.clone()],
                )
            })
            .collect();
        g = g.integrate_external(&doc, &verdict, &triples).unwrap();
    }
    g
}

// ---------------------------------------------------------------------------
// Randomly scripted pipeline runs.

/// Terms, the documents retrieved for each, and the verdict for every
/// (term, document) pair.
#[derive(Debug, Clone)]
pub struct Script {
    pub terms: Vec<String>,
    pub docs: Vec<Vec<(String, Verdict)>>,
}

impl Script {
    pub fn random(rng: &mut StdRng) -> Script {
        let n_terms = rng.random_range(0..=6);
        let terms: Vec<String> = (0..n_terms).map(|i| format!("term{i}x")).collect();
        let docs = terms
            .iter()
            .map(|_| {
                let n_docs = rng.random_range(0..=8);
                let mut ids: Vec<String> = Vec::new();
                while ids.len() < n_docs {
                    // a small id pool makes documents recur across terms
                    let id = format!("doc{}", rng.random_range(0..20));
                    if !ids.contains(&id) {
                        ids.push(id);
                    }
                }
                ids.into_iter()
                    .map(|id| (id, if rng.random_bool(0.5) { Verdict::Correct } else { Verdict::Incorrect }))
                    .collect()
            })
            .collect();
        Script { terms, docs }
    }

    pub fn source_text(&self) -> String {
        if self.terms.is_empty() {
            "Nothing unusual happened today.".to_string()
        } else {
            format!("The report mentions {}.", self.terms.join(" and "))
        }
    }

    /// Distinct CORRECT documents in judging order.
    pub fn expected_accepted(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for docs in &self.docs {
            for (id, v) in docs {
                if *v == Verdict::Correct && !out.contains(id) {
                    out.push(id.clone());
                }
            }
        }
        out
    }

    pub fn judged(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }
}

struct ScriptedSource(Arc<Script>);

impl EvidenceSource for ScriptedSource {
    fn kind(&self) -> DocumentSource {
        DocumentSource::LocalIndex
    }

    fn name(&self) -> &str {
        "scripted"
    }

    fn retrieve(&self, term: &str, _query: &str, k: usize) -> Result<Vec<RetrievedDocument>, RetrievalError> {
        let i = self.0.terms.iter().position(|t| t == term).expect("scripted term");
        Ok(self.0.docs[i]
            .iter()
            .take(k)
            .enumerate()
            .map(|(rank, (id, _))| RetrievedDocument {
                id: id.clone(),
                title: id.clone(),
                text: format!("Document {id} about several things."),
                source: DocumentSource::LocalIndex,
                score: 10.0 - rank as f64,
            })
            .collect())
    }
}

fn line_value<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(prefix))
}

pub fn scripted_backend(script: Arc<Script>) -> MockBackend {
    let detector = script.clone();
    let extractor = script.clone();
    let judge = script;
    MockBackend::new()
        .on_contains_with("Identify unknown terms", move |_| {
            let terms: Vec<_> = detector
                .terms
                .iter()
                .map(|t| serde_json::json!({"surface": t, "category": "new_term", "rationale": "scripted"}))
                .collect();
            Some(serde_json::json!({ "terms": terms }).to_string())
        })
        .on_contains_with("Extract knowledge triples", move |_| {
            let triples: Vec<_> = extractor
                .terms
                .iter()
                .map(|t| serde_json::json!({"subject": t, "relation": "appears in", "object": "report", "terms": [t]}))
                .collect();
            Some(serde_json::json!({ "triples": triples }).to_string())
        })
        .on_contains_with("Judge whether the retrieved document", move |req: &ChatRequest| {
            let user = req.last_user_message()?;
            let term = line_value(user, "Term: ")?;
            let doc = line_value(user, "Retrieved document [")?.split(']').next()?;
            let i = judge.terms.iter().position(|t| t == term)?;
            let (_, v) = judge.docs[i].iter().find(|(id, _)| id == doc)?;
            let verdict = if *v == Verdict::Correct { "CORRECT" } else { "INCORRECT" };
            Some(
                serde_json::json!({
                    "proposed_rendering": "x", "back_translation": "x", "alignment_rationale": "scripted",
                    "verdict": verdict,
                    "triples": [{"subject": term, "relation": "described by", "object": doc}]
                })
                .to_string(),
            )
        })
        .on_contains("Translate the following", r#"{"translation": "译文", "term_renderings": {}}"#)
}

pub fn scripted_pipeline(script: &Script, mode: PipelineMode) -> Pipeline {
    let script = Arc::new(script.clone());
    let mut gw = Gateway::new();
    gw.register_mock("scripted", scripted_backend(script.clone())).unwrap();
    let mut config = PipelineConfig::new(RoleBackends::all("scripted")).with_mode(mode);
    config.n2 = 8;
    config.k_per_source = 8;
    Pipeline::new(gw, vec![Box::new(ScriptedSource(script))], config).unwrap()
}

pub fn scripted_doc(script: &Script) -> SourceDocument {
    SourceDocument::new("scripted", script.source_text())
}

/// Rendered messages in the golden-file layout.
pub fn render_messages(messages: &[crat::gateway::ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        let role = serde_json::to_value(m.role).unwrap();
        out.push_str(&format!("=== {} ===\n{}\n", role.as_str().unwrap(), m.content));
    }
    out
}

pub fn golden_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares `actual` with the golden file; `UPDATE_GOLDEN=1` rewrites it.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{} differs from the rendered prompt:\n{actual}", path.display()))
    }
}

pub fn by_id<T>(items: Vec<(String, T)>) -> BTreeMap<String, T> {
    items.into_iter().collect()
}
