mod common;

use std::fs;

use crat::fixtures;
use crat::gateway::{Gateway, MockBackend};
use crat::pipeline::{
    read_result, write_transcript, Pipeline, PipelineConfig, PipelineError, PipelineMode, RoleBackends, RunManifest,
    RunStatus, SourceDocument, Stage,
};

fn docs() -> Vec<SourceDocument> {
    vec![
        fixtures::financial_doc(),
        fixtures::geographic_doc(),
        SourceDocument::new("plain", "The weather stayed mild."),
        SourceDocument::new("scotia-only", "Scotia offers a new savings plan, so I opened an account at the bank."),
        SourceDocument::new("river", "Children fished from the bank all afternoon."),
    ]
}

fn with_width(width: usize) -> Pipeline {
    let mut config = PipelineConfig::new(RoleBackends::all(fixtures::BANK_SCOTIA_BACKEND));
    config.width = width;
    Pipeline::new(fixtures::bank_scotia_gateway(), vec![Box::new(fixtures::bank_scotia_glossary())], config).unwrap()
}

fn canonical(out: &crat::pipeline::BatchOutput) -> Vec<String> {
    out.results
        .iter()
        .map(|r| r.as_ref().unwrap().without_telemetry().to_canonical_string())
        .collect()
}

#[test]
fn batch_width_does_not_change_results() {
    let narrow = with_width(1).run_batch(&docs(), fixtures::en_zh());
    let wide = with_width(4).run_batch(&docs(), fixtures::en_zh());
    assert_eq!(canonical(&narrow), canonical(&wide));
    let ids: Vec<_> = wide.manifest.records.iter().map(|r| r.doc_id.as_str()).collect();
    assert_eq!(ids, vec!["bank-financial", "bank-geographic", "plain", "scotia-only", "river"]);
    assert_eq!(narrow.manifest.config_hash, with_width(1).config_hash());
    assert_ne!(narrow.manifest.config_hash, wide.manifest.config_hash);
}

#[test]
fn one_failure_does_not_stop_the_batch() {
    let mut gw = Gateway::new();
    gw.register_mock(
        "m",
        MockBackend::new()
            .on_contains("BROKEN", "nothing useful")
            .on_contains("Translate the following", r#"{"translation": "好"}"#),
    )
    .unwrap();
    let mut config = PipelineConfig::new(RoleBackends::all("m")).with_mode(PipelineMode::Direct);
    config.width = 3;
    let p = Pipeline::new(gw, Vec::new(), config).unwrap();
    let batch: Vec<_> = (0..5)
        .map(|i| SourceDocument::new(format!("d{i}"), if i == 2 { "BROKEN text" } else { "fine text" }))
        .collect();
    let out = p.run_batch(&batch, fixtures::en_zh());
    assert_eq!(out.manifest.succeeded, 4);
    assert_eq!(out.manifest.failed, 1);
    assert!(matches!(out.results[2], Err(PipelineError::Agent { stage: Stage::Translate, .. })));
    let failed = &out.manifest.records[2];
    assert_eq!(failed.status, RunStatus::Failed);
    assert!(failed.error.as_deref().unwrap().contains("unparsable"));
    assert!(out.results.iter().enumerate().all(|(i, r)| r.is_ok() == (i != 2)));
}

#[test]
fn empty_batch_still_has_a_manifest() {
    let out = with_width(2).run_batch(&[], fixtures::en_zh());
    assert!(out.results.is_empty());
    assert_eq!((out.manifest.documents, out.manifest.succeeded, out.manifest.failed), (0, 0, 0));
    let dir = tempfile::tempdir().unwrap();
    out.manifest.write(dir.path()).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("manifest.jsonl")).unwrap(), "");
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(run["documents"], 0);
    assert!(run.get("records").is_none());
}

#[test]
fn transcripts_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let write = |sub: &str| {
        let r = fixtures::bank_scotia_pipeline(PipelineMode::Crat)
            .run(&fixtures::financial_doc(), fixtures::en_zh())
            .unwrap();
        write_transcript(&r, &dir.path().join(sub)).unwrap()
    };
    let a = write("a");
    let b = write("b");
    for f in ["result.json", "graph.json", "transcript.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let back = read_result(&a.join("result.json")).unwrap();
    assert!(back.timings.values().all(|&ms| ms == 0));
    assert_eq!(back.graph.accepted_docs, vec!["bank-scotia:2", "bank-scotia:4"]);
    let graph = crat::transkg::TransKG::deserialize(&fs::read(a.join("graph.json")).unwrap()).unwrap();
    assert_eq!(graph, back.graph);
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let r = fixtures::bank_scotia_pipeline(PipelineMode::Direct)
        .run(&fixtures::financial_doc(), fixtures::en_zh())
        .unwrap();
    assert!(matches!(write_transcript(&r, &blocker), Err(PipelineError::Io(_))));
    let m = RunManifest {
        config_hash: String::new(),
        mode: PipelineMode::Direct,
        documents: 0,
        succeeded: 0,
        failed: 0,
        fallbacks: 0,
        total_timings: Default::default(),
        records: Vec::new(),
    };
    assert!(m.write(&blocker).is_err());
}

#[test]
fn unrefined_admits_everything_retrieved() {
    let r = fixtures::bank_scotia_pipeline(PipelineMode::Unrefined)
        .run(&fixtures::geographic_doc(), fixtures::en_zh())
        .unwrap();
    assert_eq!(r.judged_count, 0);
    assert!(r.verdicts.is_empty());
    let retrieved: Vec<&str> = r.retrievals.iter().flat_map(|t| t.documents.iter().map(|d| d.id.as_str())).collect();
    assert_eq!(r.graph.accepted_docs, retrieved);
    assert_eq!(r.accepted_count, retrieved.len());
}

#[test]
fn missing_role_backend_rejected() {
    let err = Pipeline::new(Gateway::new(), Vec::new(), PipelineConfig::new(RoleBackends::all("ghost")));
    assert!(matches!(err, Err(PipelineError::Config(_))));
}

#[test]
fn scripted_runs_match_across_modes() {
    let mut rng = common::rng(11);
    for _ in 0..30 {
        let script = common::Script::random(&mut rng);
        let doc = common::scripted_doc(&script);
        let crat = common::scripted_pipeline(&script, PipelineMode::Crat).run(&doc, fixtures::en_zh()).unwrap();
        let unrefined =
            common::scripted_pipeline(&script, PipelineMode::Unrefined).run(&doc, fixtures::en_zh()).unwrap();
        // same retrieval either way; judging can only remove documents
        assert_eq!(crat.retrievals, unrefined.retrievals);
        assert!(crat.graph.accepted_docs.iter().all(|d| unrefined.graph.accepted_docs.contains(d)));
        assert_eq!(crat.graph.internal_triples().count(), unrefined.graph.internal_triples().count());
    }
}
