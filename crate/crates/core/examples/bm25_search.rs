//! Builds a BM25 index over a small corpus and runs a few queries.

use crat::retrieval::{CorpusDoc, CorpusIndex};
use crat::text::Tokenizer;

fn main() -> anyhow::Result<()> {
    let corpus = [
        ("scotiabank", "Scotiabank", "Canadian bank offering savings plans, loans and accounts."),
        ("scotia-sea", "Scotia Sea", "A sea between the Southern Ocean and the South Atlantic."),
        ("riverbank", "Bank (geography)", "The land alongside a river, where people fish and boats moor."),
        ("phin", "Phin", "A small Vietnamese metal coffee filter placed on top of a cup."),
    ];
    let docs: Vec<CorpusDoc> = corpus
        .iter()
        .map(|(id, title, text)| CorpusDoc { id: id.to_string(), title: title.to_string(), text: text.to_string() })
        .collect();
    let index = CorpusIndex::build(&docs, Tokenizer::Latin)?;
    println!("{} documents, {} terms, avgdl {:.2}", index.doc_count(), index.term_count(), index.avg_doc_length());

    for q in ["bank savings account", "river bank boats", "scotia sea", "coffee filter"] {
        println!("\n{q}");
        for d in index.search(q, 3) {
            println!("  {:>7.4}  {}", d.score, d.id);
        }
    }
    Ok(())
}
