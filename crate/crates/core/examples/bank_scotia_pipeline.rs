//! The three pipeline modes on the geographic "bank" sentence.

use crat::eval::term_consistency;
use crat::fixtures;
use crat::pipeline::PipelineMode;

fn main() -> anyhow::Result<()> {
    for mode in [PipelineMode::Direct, PipelineMode::Unrefined, PipelineMode::Crat] {
        let r = fixtures::bank_scotia_pipeline(mode).run(&fixtures::geographic_doc(), fixtures::en_zh())?;
        println!("{mode:?}");
        println!("  stages:      {:?}", r.transcript.stage_sequence());
        println!("  translation: {}", r.target_text);
        println!("  accepted:    {:?}", r.graph.accepted_docs);
        println!("  consistency: {:?}", term_consistency(&r).score);
    }
    Ok(())
}
