//! Builds a TransKG by hand: terms, internal triples, one accepted and one
//! rejected document.

use crat::agents::{JudgeVerdict, Verdict};
use crat::retrieval::{DocumentSource, RetrievedDocument};
use crat::text::find_char_span;
use crat::transkg::{KnowledgeTriple, TermCandidate, TermCategory, TransKG};

fn main() -> anyhow::Result<()> {
    let text = "Scotia offers a new savings plan, so I opened an account at the bank.";
    let term = |surface: &str, category| TermCandidate {
        surface: surface.into(),
        span: find_char_span(text, surface).expect("term in text"),
        category,
        rationale: String::new(),
    };
    let terms = [term("Scotia", TermCategory::ProperNoun), term("bank", TermCategory::Polyseme)];

    let graph = TransKG::new("example", &terms)
        .add_internal(&[KnowledgeTriple::internal("Scotia", "offers", "savings plan", ["Scotia"])])?;

    let doc = |id: &str, text: &str| RetrievedDocument {
        id: id.into(),
        title: "Scotia".into(),
        text: text.into(),
        source: DocumentSource::Glossary,
        score: 1.0,
    };
    let verdict = |id: &str, v| JudgeVerdict {
        doc_id: id.into(),
        term: "Scotia".into(),
        verdict: v,
        proposed_rendering: String::new(),
        back_translation: String::new(),
        alignment_rationale: String::new(),
    };

    let bank = doc("g:1", "Scotiabank, a Canadian bank");
    let sea = doc("g:2", "the Scotia Sea");
    let graph = graph
        .integrate_external(
            &bank,
            &verdict("g:1", Verdict::Correct),
            &[KnowledgeTriple::external("Scotia", "is a", "bank", "g:1", ["Scotia"])],
        )?
        .integrate_external(
            &sea,
            &verdict("g:2", Verdict::Incorrect),
            &[KnowledgeTriple::external("Scotia", "is a", "sea", "g:2", ["Scotia"])],
        )?;

    println!("accepted: {:?}", graph.accepted_docs);
    for t in graph.triples_for_term("Scotia") {
        println!("{}", t.display());
    }
    let bytes = graph.serialize();
    assert_eq!(TransKG::deserialize(&bytes)?, graph);
    println!("{}", String::from_utf8(bytes)?);
    Ok(())
}
