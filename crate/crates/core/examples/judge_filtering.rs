//! The judge on the bank/Scotia glossary: the same documents are accepted or
//! rejected depending on the context sentence.

use crat::fixtures;
use crat::pipeline::PipelineMode;

fn main() -> anyhow::Result<()> {
    let pipeline = fixtures::bank_scotia_pipeline(PipelineMode::Crat);
    for doc in [fixtures::financial_doc(), fixtures::geographic_doc()] {
        let r = pipeline.run(&doc, fixtures::en_zh())?;
        println!("{}", doc.text);
        for v in &r.verdicts {
            println!("  {:<7} {:<14} {:?}  ({})", v.term, v.doc_id, v.verdict, v.proposed_rendering);
        }
        println!("  accepted: {:?}\n", r.graph.accepted_docs);
    }
    Ok(())
}
