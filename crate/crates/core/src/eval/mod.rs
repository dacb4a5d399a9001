//! Translation quality metrics and run comparison.

mod bleu;
mod consistency;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{corpus_bleu, sentence_stats, NgramStats, MAX_ORDER};
pub use consistency::{term_consistency, TermConsistency};

use crate::agents::{consis_evaluate, AgentContext};
use crate::gateway::{ChatParams, Gateway};
use crate::pipeline::TranslationResult;
use crate::text::{Lang, LangPair};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{candidates} candidates but {references} references")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("nothing to score")]
    Empty,
    #[error("ids do not match; missing results: [{}]; unexpected results: [{}]", missing.join(", "), extra.join(", "))]
    IdMismatch { missing: Vec<String>, extra: Vec<String> },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("example `{0}`: {1}")]
    InvalidExample(String, String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One aligned source/reference pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelExample {
    pub id: String,
    pub source_text: String,
    pub reference_text: String,
    pub source_lang: Lang,
    pub target_lang: Lang,
}

impl ParallelExample {
    pub fn lang_pair(&self) -> LangPair {
        LangPair::new(self.source_lang, self.target_lang)
    }

    fn validate(&self) -> Result<(), EvalError> {
        if self.source_text.trim().is_empty() || self.reference_text.trim().is_empty() {
            return Err(EvalError::InvalidExample(self.id.clone(), "empty source or reference".into()));
        }
        Ok(())
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>, EvalError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| EvalError::Parse { line: i + 1, message: e.to_string() })?;
        out.push((i + 1, v));
    }
    Ok(out)
}

/// Reads a parallel corpus in JSON Lines. Ids must be unique.
pub fn read_parallel_jsonl(path: &Path) -> Result<Vec<ParallelExample>, EvalError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, ex) in read_jsonl::<ParallelExample>(path)? {
        ex.validate()?;
        if !seen.insert(ex.id.clone()) {
            return Err(EvalError::Parse { line, message: format!("duplicate id `{}`", ex.id) });
        }
        out.push(ex);
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExternalScore {
    id: String,
    score: f64,
}

/// Reads `{id, score}` lines produced by an external scorer such as COMET.
pub fn read_external_scores(path: &Path) -> Result<BTreeMap<String, f64>, EvalError> {
    Ok(read_jsonl::<ExternalScore>(path)?
        .into_iter()
        .map(|(_, s)| (s.id, s.score))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMetrics {
    pub id: String,
    pub status: ExampleStatus,
    /// Statistics against the reference; a failed example counts as an empty
    /// candidate.
    pub bleu_stats: NgramStats,
    pub sentence_bleu: f64,
    pub consis: Option<f64>,
    pub term_consistency: Option<f64>,
    pub comet: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub consis: Option<f64>,
    pub term_consistency: Option<f64>,
    /// Mean of externally supplied scores, when given.
    pub comet: Option<f64>,
    pub per_example: Vec<ExampleMetrics>,
    pub config_hash: String,
    pub warnings: Vec<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricReport {
    /// Builds aggregates from per-example rows: corpus BLEU from summed
    /// statistics, the other metrics as means over examples that have them.
    pub fn from_examples(per_example: Vec<ExampleMetrics>, config_hash: String, warnings: Vec<String>) -> Self {
        let mut total = NgramStats::default();
        for e in &per_example {
            total.add(&e.bleu_stats);
        }
        Self {
            bleu: if per_example.is_empty() { 0.0 } else { total.bleu() },
            consis: mean(per_example.iter().filter_map(|e| e.consis)),
            term_consistency: mean(per_example.iter().filter_map(|e| e.term_consistency)),
            comet: mean(per_example.iter().filter_map(|e| e.comet)),
            per_example,
            config_hash,
            warnings,
        }
    }

    pub fn example_ids(&self) -> BTreeSet<&str> {
        self.per_example.iter().map(|e| e.id.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Backend used for CONSIS scoring.
pub struct ConsisScorer<'a> {
    pub gateway: &'a Gateway,
    pub backend: &'a str,
    pub params: &'a ChatParams,
}

#[derive(Default)]
pub struct EvalOptions<'a> {
    pub consis: Option<ConsisScorer<'a>>,
    pub term_consistency: bool,
    pub external_scores: Option<BTreeMap<String, f64>>,
    /// Ids of documents whose translation failed, with the error.
    pub failed: BTreeMap<String, String>,
    pub config_hash: String,
}

/// Scores `results` against `examples`, aligned by id.
///
/// Every example needs either a result or an entry in `options.failed`, and
/// every result must belong to an example.
pub fn evaluate_run(
    examples: &[ParallelExample],
    results: &[TranslationResult],
    options: &EvalOptions<'_>,
) -> Result<MetricReport, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::Empty);
    }
    let by_id: BTreeMap<&str, &TranslationResult> = results.iter().map(|r| (r.source_doc_id.as_str(), r)).collect();
    let example_ids: BTreeSet<&str> = examples.iter().map(|e| e.id.as_str()).collect();
    let missing: Vec<String> = examples
        .iter()
        .filter(|e| !by_id.contains_key(e.id.as_str()) && !options.failed.contains_key(&e.id))
        .map(|e| e.id.clone())
        .collect();
    let extra: Vec<String> = by_id
        .keys()
        .filter(|id| !example_ids.contains(*id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(EvalError::IdMismatch { missing, extra });
    }

    let mut warnings = Vec::new();
    let mut rows = Vec::with_capacity(examples.len());
    for ex in examples {
        let comet = options.external_scores.as_ref().and_then(|s| s.get(&ex.id).copied());
        let Some(result) = by_id.get(ex.id.as_str()) else {
            let stats = sentence_stats("", &ex.reference_text, ex.target_lang);
            rows.push(ExampleMetrics {
                id: ex.id.clone(),
                status: ExampleStatus::Failed,
                sentence_bleu: stats.bleu(),
                bleu_stats: stats,
                consis: None,
                term_consistency: None,
                comet,
                error: options.failed.get(&ex.id).cloned(),
            });
            continue;
        };
        let stats = sentence_stats(&result.target_text, &ex.reference_text, ex.target_lang);
        let consis = options.consis.as_ref().and_then(|scorer| {
            let ctx = AgentContext::new(scorer.gateway, scorer.backend, scorer.params);
            match consis_evaluate(&ctx, &ex.source_text, &result.target_text, &result.terms, ex.lang_pair()) {
                Ok(out) => {
                    warnings.extend(out.warnings.into_iter().map(|w| format!("{}: {w}", ex.id)));
                    Some(out.parsed.score)
                }
                Err(e) => {
                    warnings.push(format!("{}: CONSIS unavailable: {e}", ex.id));
                    None
                }
            }
        });
        let tc = if options.term_consistency {
            let tc = term_consistency(result);
            warnings.extend(tc.warnings);
            tc.score
        } else {
            None
        };
        rows.push(ExampleMetrics {
            id: ex.id.clone(),
            status: ExampleStatus::Ok,
            sentence_bleu: stats.bleu(),
            bleu_stats: stats,
            consis,
            term_consistency: tc,
            comet,
            error: None,
        });
    }
    if let Some(scores) = &options.external_scores {
        for id in scores.keys().filter(|id| !example_ids.contains(id.as_str())) {
            warnings.push(format!("external score for unknown id `{id}` ignored"));
        }
    }
    Ok(MetricReport::from_examples(rows, options.config_hash.clone(), warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub baseline: Option<f64>,
    pub candidate: Option<f64>,
    /// `candidate − baseline`; `None` when either side is missing.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline_config: String,
    pub candidate_config: String,
    pub rows: Vec<MetricDelta>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into())
}

impl Comparison {
    /// Aligned plain-text table with signed deltas.
    pub fn render_table(&self) -> String {
        let header = ["metric", "baseline", "crat", "delta"];
        let rows: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.metric.clone(),
                    cell(r.baseline),
                    cell(r.candidate),
                    r.delta.map(|d| format!("{d:+.2}")).unwrap_or_else(|| "unavailable".into()),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |cells: [&str; 4], out: &mut String| {
            let _ = write!(out, "{:<w0$}", cells[0], w0 = widths[0]);
            for (c, w) in cells[1..].iter().zip(&widths[1..]) {
                let _ = write!(out, "  {c:>w$}");
            }
            out.push('\n');
        };
        line(header, &mut out);
        for r in &rows {
            line([&r[0], &r[1], &r[2], &r[3]], &mut out);
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("comparison serializes");
        s.push('\n');
        s
    }
}

/// Per-metric deltas of `candidate` against `baseline`. Both reports must
/// cover the same example ids.
pub fn compare_reports(baseline: &MetricReport, candidate: &MetricReport) -> Result<Comparison, EvalError> {
    let (a, b) = (baseline.example_ids(), candidate.example_ids());
    if a != b {
        return Err(EvalError::IdMismatch {
            missing: a.difference(&b).map(|s| s.to_string()).collect(),
            extra: b.difference(&a).map(|s| s.to_string()).collect(),
        });
    }
    let row = |metric: &str, x: Option<f64>, y: Option<f64>| MetricDelta {
        metric: metric.into(),
        baseline: x,
        candidate: y,
        delta: x.zip(y).map(|(x, y)| y - x),
    };
    Ok(Comparison {
        baseline_config: baseline.config_hash.clone(),
        candidate_config: candidate.config_hash.clone(),
        rows: vec![
            row("bleu", Some(baseline.bleu), Some(candidate.bleu)),
            row("consis", baseline.consis, candidate.consis),
            row("term_consistency", baseline.term_consistency, candidate.term_consistency),
            row("comet", baseline.comet, candidate.comet),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::gateway::MockBackend;
    use crate::pipeline::PipelineMode;

    fn example(id: &str, src: &str, reference: &str) -> ParallelExample {
        ParallelExample {
            id: id.into(),
            source_text: src.into(),
            reference_text: reference.into(),
            source_lang: Lang::En,
            target_lang: Lang::Zh,
        }
    }

    fn report(bleu: f64, consis: Option<f64>) -> MetricReport {
        MetricReport {
            bleu,
            consis,
            term_consistency: None,
            comet: None,
            per_example: vec![],
            config_hash: String::new(),
            warnings: vec![],
        }
    }

    fn geo_run(mode: PipelineMode) -> TranslationResult {
        fixtures::bank_scotia_pipeline(mode)
            .run(&fixtures::geographic_doc(), fixtures::en_zh())
            .unwrap()
    }

    #[test]
    fn perfect_candidates_score_100() {
        let r = geo_run(PipelineMode::Crat);
        let ex = example(&r.source_doc_id, &r.source_text, &r.target_text);
        let rep = evaluate_run(&[ex], &[r], &EvalOptions::default()).unwrap();
        assert_eq!(rep.bleu, 100.0);
        assert_eq!(rep.consis, None);
    }

    #[test]
    fn consis_is_mean_of_scripted_scores() {
        let mut gw = Gateway::new();
        gw.register_mock(
            "judge",
            MockBackend::new()
                .on_contains("小船", r#"{"score": 80}"#)
                .on_contains("孩子", r#"{"score": 60}"#),
        )
        .unwrap();
        let params = ChatParams::default();
        let mut a = geo_run(PipelineMode::Crat);
        a.source_doc_id = "a".into();
        a.target_text = "小船".into();
        let mut b = a.clone();
        b.source_doc_id = "b".into();
        b.target_text = "孩子".into();
        let examples = [example("a", GEO, "小船"), example("b", GEO, "孩子")];
        let opts = EvalOptions {
            consis: Some(ConsisScorer { gateway: &gw, backend: "judge", params: &params }),
            ..Default::default()
        };
        let rep = evaluate_run(&examples, &[a, b], &opts).unwrap();
        assert_eq!(rep.consis, Some(70.0));
    }

    const GEO: &str = fixtures::GEOGRAPHIC_TEXT;

    #[test]
    fn id_mismatch_lists_ids() {
        let r = geo_run(PipelineMode::Crat);
        let err = evaluate_run(&[example("other", GEO, "x")], &[r], &EvalOptions::default()).unwrap_err();
        match err {
            EvalError::IdMismatch { missing, extra } => {
                assert_eq!(missing, vec!["other"]);
                assert_eq!(extra, vec!["bank-geographic"]);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn failed_examples_count_as_empty() {
        let opts = EvalOptions {
            failed: BTreeMap::from([("x".to_string(), "boom".to_string())]),
            ..Default::default()
        };
        let rep = evaluate_run(&[example("x", GEO, "河岸")], &[], &opts).unwrap();
        assert_eq!(rep.bleu, 0.0);
        assert_eq!(rep.per_example[0].status, ExampleStatus::Failed);
    }

    #[test]
    fn aggregates_recompute_from_breakdown() {
        let crat = geo_run(PipelineMode::Crat);
        let ex = example(&crat.source_doc_id, GEO, "小船顺流而下，停在了河岸。孩子们整个下午都在岸边钓鱼。");
        let opts = EvalOptions { term_consistency: true, ..Default::default() };
        let rep = evaluate_run(&[ex], &[crat], &opts).unwrap();
        let again = MetricReport::from_examples(rep.per_example.clone(), rep.config_hash.clone(), rep.warnings.clone());
        assert_eq!(rep, again);
        assert_eq!(rep.term_consistency, Some(1.0));
    }

    #[test]
    fn delta_formatting() {
        let cmp = compare_reports(&report(29.9, Some(83.0)), &report(30.8, None)).unwrap();
        assert!((cmp.rows[0].delta.unwrap() - 0.9).abs() < 1e-9);
        assert_eq!(cmp.rows[1].delta, None);
        let table = cmp.render_table();
        assert!(table.contains("+0.90"));
        assert!(table.contains("unavailable"));
        let widths: BTreeSet<usize> = table.lines().map(|l| l.chars().count()).collect();
        assert_eq!(widths.len(), 1, "{table}");
    }

    #[test]
    fn identical_reports_zero_delta() {
        let r = report(12.5, Some(50.0));
        let cmp = compare_reports(&r, &r).unwrap();
        assert_eq!(cmp.rows[0].delta, Some(0.0));
        assert_eq!(cmp.rows[1].delta, Some(0.0));
    }
}
