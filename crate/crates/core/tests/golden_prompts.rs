//! Prompts sent on the bank/Scotia financial run, compared with the files in
//! `tests/golden/`. Set `UPDATE_GOLDEN=1` to rewrite them after a deliberate
//! template change.

mod common;

use crat::fixtures;
use crat::pipeline::{PipelineMode, Stage, TranslationResult};

fn financial_run() -> TranslationResult {
    fixtures::bank_scotia_pipeline(PipelineMode::Crat)
        .run(&fixtures::financial_doc(), fixtures::en_zh())
        .unwrap()
}

fn first_prompt(r: &TranslationResult, stage: Stage) -> String {
    let ex = &r.transcript.stage(stage).unwrap().exchanges[0];
    common::render_messages(&ex.request.messages)
}

#[test]
fn detector_prompt() {
    let r = financial_run();
    common::check_golden("detector.txt", &first_prompt(&r, Stage::Detect)).unwrap();
}

#[test]
fn extractor_prompt() {
    let r = financial_run();
    common::check_golden("extractor.txt", &first_prompt(&r, Stage::Extract)).unwrap();
}

#[test]
fn judge_prompt() {
    let r = financial_run();
    let prompt = first_prompt(&r, Stage::Judge);
    assert!(prompt.contains("Term: Scotia\n"));
    assert!(prompt.contains("Retrieved document [bank-scotia:2] Scotia:\n"));
    common::check_golden("judge.txt", &prompt).unwrap();
}

#[test]
fn translator_prompt_with_knowledge() {
    let r = financial_run();
    let prompt = first_prompt(&r, Stage::Translate);
    let knowledge = prompt.find("Knowledge about difficult terms").unwrap();
    assert!(knowledge < prompt.find("Translate the following").unwrap());
    assert!(!prompt.contains("斯科舍海"), "rejected evidence leaked into the prompt");
    common::check_golden("translator_with_knowledge.txt", &prompt).unwrap();
}

#[test]
fn repair_prompts_follow_the_original() {
    use crat::gateway::{Gateway, MockBackend};
    use crat::pipeline::{Pipeline, PipelineConfig, RoleBackends};

    let mut gw = Gateway::new();
    gw.register_mock(
        "m",
        MockBackend::new()
            .on_contains("Identify unknown terms", "no structured block")
            .on_contains("Translate the following", r#"{"translation": "好"}"#),
    )
    .unwrap();
    let p = Pipeline::new(gw, Vec::new(), PipelineConfig::new(RoleBackends::all("m"))).unwrap();
    let r = p.run(&fixtures::financial_doc(), fixtures::en_zh()).unwrap();
    let ex = &r.transcript.stage(Stage::Detect).unwrap().exchanges;
    assert_eq!(ex.len(), 3);
    let last = common::render_messages(&ex[2].request.messages);
    assert!(last.starts_with(&common::render_messages(&ex[0].request.messages)));
    common::check_golden("detector_repair.txt", &last).unwrap();
}
