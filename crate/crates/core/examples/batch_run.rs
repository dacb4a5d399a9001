//! Translates a small batch in parallel and writes transcripts plus the run
//! manifest to a temporary directory.

use crat::fixtures;
use crat::pipeline::{write_transcript, Pipeline, PipelineConfig, RoleBackends, SourceDocument};

fn main() -> anyhow::Result<()> {
    let mut config = PipelineConfig::new(RoleBackends::all(fixtures::BANK_SCOTIA_BACKEND));
    config.width = 3;
    let pipeline =
        Pipeline::new(fixtures::bank_scotia_gateway(), vec![Box::new(fixtures::bank_scotia_glossary())], config)?;
    let docs = vec![
        fixtures::financial_doc(),
        fixtures::geographic_doc(),
        SourceDocument::new("plain", "The weather stayed mild."),
    ];
    let out = tempfile::tempdir()?;
    let batch = pipeline.run_batch(&docs, fixtures::en_zh());
    for r in batch.results.iter().flatten() {
        let dir = write_transcript(r, out.path())?;
        println!("{} -> {}", r.source_doc_id, dir.display());
    }
    batch.manifest.write(out.path())?;
    print!("{}", std::fs::read_to_string(out.path().join("manifest.jsonl"))?);
    Ok(())
}
