//! Scores a crat run and a direct run against a reference and prints the
//! comparison table.

use crat::eval::{compare_reports, evaluate_run, EvalOptions, ParallelExample};
use crat::fixtures;
use crat::pipeline::PipelineMode;
use crat::text::Lang;

fn main() -> anyhow::Result<()> {
    let examples = vec![ParallelExample {
        id: "bank-geographic".into(),
        source_text: fixtures::GEOGRAPHIC_TEXT.into(),
        reference_text: "小船顺流而下，停在了河岸。孩子们整个下午都在河岸钓鱼。".into(),
        source_lang: Lang::En,
        target_lang: Lang::Zh,
    }];
    let options = EvalOptions { term_consistency: true, ..Default::default() };
    let mut reports = Vec::new();
    for mode in [PipelineMode::Direct, PipelineMode::Crat] {
        let r = fixtures::bank_scotia_pipeline(mode).run(&fixtures::geographic_doc(), fixtures::en_zh())?;
        let report = evaluate_run(&examples, &[r], &options)?;
        println!("{mode:?}: bleu {:.2}", report.bleu);
        reports.push(report);
    }
    print!("\n{}", compare_reports(&reports[0], &reports[1])?.render_table());
    Ok(())
}
