//! `crat` command-line interface.
//!
//! Exit codes: 0 on success, 2 when some documents of a batch failed, 1 on a
//! fatal error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::eval::{
    compare_reports, evaluate_run, read_external_scores, read_parallel_jsonl, ConsisScorer, EvalOptions, MetricReport,
};
use crate::pipeline::{
    read_result, write_transcript, ManifestRecord, PipelineMode, RunStatus, SourceDocument, TranslationResult,
};
use crate::retrieval::{read_corpus_jsonl, CorpusIndex};
use crate::text::{LangPair, Tokenizer};
use crate::transkg::TransKG;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "crat", version, about = "Retrieval-augmented translation with a judged term knowledge graph")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Translate a text or a corpus and write transcripts.
    Translate(TranslateArgs),
    /// Build a BM25 index from a JSON Lines corpus.
    BuildIndex(BuildIndexArgs),
    /// Score translation results against references.
    Evaluate(EvaluateArgs),
    /// Print the knowledge graph of a translated document.
    InspectKg(InspectArgs),
}

#[derive(Debug, clap::Args)]
pub struct TranslateArgs {
    /// Run configuration; defaults to the built-in bank/Scotia fixture.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Literal source text.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub text: Option<String>,
    /// Plain-text file (one document) or JSON Lines with `id` and `text` or
    /// `source_text`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Document id for `--text`.
    #[arg(long, default_value = "doc")]
    pub id: String,
    /// Language pair as `<src>-<tgt>`.
    #[arg(long, default_value = "en-zh")]
    pub lang: LangPair,
    /// direct, unrefined or crat; overrides the config.
    #[arg(long)]
    pub mode: Option<PipelineMode>,
    /// Directory for per-document transcripts and the run manifest.
    #[arg(long)]
    pub output: PathBuf,
    /// Documents translated concurrently; overrides the config.
    #[arg(long)]
    pub width: Option<usize>,
    /// Bypass the response cache.
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Debug, clap::Args)]
pub struct BuildIndexArgs {
    /// JSON Lines with `id`, optional `title`, and `text`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Index file to write.
    #[arg(long)]
    pub output: PathBuf,
    /// latin or zh-char.
    #[arg(long, default_value = "latin")]
    pub tokenizer: Tokenizer,
}

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Output directory of a `translate` run.
    #[arg(long)]
    pub results: PathBuf,
    /// Parallel corpus, JSON Lines.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Enables CONSIS when the config names a backend for it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write the JSON report; defaults to `<results>/report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Results of a baseline run to compare against.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// External scorer output, JSON Lines `{id, score}`.
    #[arg(long)]
    pub comet: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct InspectArgs {
    /// A document directory written by `translate`.
    #[arg(long)]
    pub transcript: PathBuf,
    /// Only show triples for this term.
    #[arg(long)]
    pub term: Option<String>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Translate(a) => cmd_translate(&a),
        Command::BuildIndex(a) => cmd_build_index(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::InspectKg(a) => cmd_inspect_kg(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FATAL
        }
    }
}

fn read_inputs(args: &TranslateArgs) -> Result<Vec<SourceDocument>> {
    if let Some(text) = &args.text {
        return Ok(vec![SourceDocument::new(args.id.clone(), text.clone())]);
    }
    let path = args.input.as_ref().expect("clap requires text or input");
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        let mut docs = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value =
                serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
            let id = v["id"]
                .as_str()
                .ok_or_else(|| anyhow!("{}:{}: missing string `id`", path.display(), i + 1))?;
            let text = v["text"]
                .as_str()
                .or_else(|| v["source_text"].as_str())
                .ok_or_else(|| anyhow!("{}:{}: missing `text` or `source_text`", path.display(), i + 1))?;
            docs.push(SourceDocument::new(id, text));
        }
        Ok(docs)
    } else {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| args.id.clone());
        Ok(vec![SourceDocument::new(id, raw.trim_end())])
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(RunConfig::builtin_bank_scotia()),
    }
}

pub fn cmd_translate(args: &TranslateArgs) -> Result<i32> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(m) = args.mode {
        cfg.pipeline.mode = m;
    }
    if let Some(w) = args.width {
        cfg.pipeline.width = w;
    }
    if args.no_cache {
        cfg.pipeline.cache = false;
    }
    cfg.validate()?;
    let docs = read_inputs(args)?;
    let pipeline = cfg.build_pipeline()?;
    let batch = pipeline.run_batch(&docs, args.lang);

    fs::create_dir_all(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    for r in batch.results.iter().flatten() {
        write_transcript(r, &args.output)?;
    }
    batch.manifest.write(&args.output)?;

    for (doc, r) in docs.iter().zip(&batch.results) {
        match r {
            Ok(res) => {
                let flag = if res.fallback { " (fallback)" } else { "" };
                println!("{}{flag}\t{}", doc.id, res.target_text);
            }
            Err(e) => eprintln!("{}: failed: {e}", doc.id),
        }
    }
    let m = &batch.manifest;
    eprintln!(
        "{} documents: {} ok, {} failed, {} fallback; written to {}",
        m.documents,
        m.succeeded,
        m.failed,
        m.fallbacks,
        args.output.display()
    );
    Ok(match (m.failed, m.succeeded) {
        (0, _) => EXIT_OK,
        (_, 0) => EXIT_FATAL,
        _ => EXIT_PARTIAL,
    })
}

pub fn cmd_build_index(args: &BuildIndexArgs) -> Result<i32> {
    let corpus = read_corpus_jsonl(&args.corpus).with_context(|| format!("reading {}", args.corpus.display()))?;
    if corpus.is_empty() {
        log::warn!("{} contains no documents", args.corpus.display());
        eprintln!("warning: corpus is empty");
    }
    let index = CorpusIndex::build(&corpus, args.tokenizer)?;
    index.save(&args.output)?;
    println!("documents: {}", index.doc_count());
    println!("terms: {}", index.term_count());
    Ok(EXIT_OK)
}

/// Results and failure records of a `translate` output directory.
fn load_results(dir: &Path) -> Result<(Vec<TranslationResult>, BTreeMap<String, String>)> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("result.json").is_file())
        .collect();
    entries.sort();
    let results = entries
        .iter()
        .map(|p| read_result(&p.join("result.json")))
        .collect::<Result<Vec<_>, _>>()?;
    let mut failed = BTreeMap::new();
    let manifest = dir.join("manifest.jsonl");
    if manifest.is_file() {
        for line in fs::read_to_string(&manifest)?.lines().filter(|l| !l.trim().is_empty()) {
            let rec: ManifestRecord = serde_json::from_str(line).with_context(|| manifest.display().to_string())?;
            if rec.status == RunStatus::Failed {
                failed.insert(rec.doc_id, rec.error.unwrap_or_default());
            }
        }
    }
    if results.is_empty() && failed.is_empty() {
        bail!("no results found in {}", dir.display());
    }
    Ok((results, failed))
}

fn evaluate_dir(dir: &Path, args: &EvaluateArgs, cfg: Option<&RunConfig>) -> Result<MetricReport> {
    let examples = read_parallel_jsonl(&args.corpus).with_context(|| format!("reading {}", args.corpus.display()))?;
    let (results, failed) = load_results(dir)?;
    let external_scores = args.comet.as_deref().map(read_external_scores).transpose()?;
    let gateway = match cfg {
        Some(c) if c.eval.consis && c.eval.consis_backend.is_some() => Some(c.build_gateway()?),
        _ => None,
    };
    let params = cfg.map(|c| c.pipeline_config().params).unwrap_or_default();
    let consis = match (&gateway, cfg.and_then(|c| c.eval.consis_backend.as_deref())) {
        (Some(gw), Some(backend)) => Some(ConsisScorer { gateway: gw, backend, params: &params }),
        _ => None,
    };
    let options = EvalOptions {
        consis,
        term_consistency: cfg.map(|c| c.eval.term_consistency).unwrap_or(true),
        external_scores,
        failed,
        config_hash: cfg.map(RunConfig::config_hash).unwrap_or_default(),
    };
    evaluate_run(&examples, &results, &options).with_context(|| format!("evaluating {}", dir.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32> {
    let cfg = args.config.as_deref().map(|p| load_config(Some(p))).transpose()?;
    let report = evaluate_dir(&args.results, args, cfg.as_ref())?;
    let report_path = args.report.clone().unwrap_or_else(|| args.results.join("report.json"));
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&report_path, report.to_json())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("bleu: {:.2}", report.bleu);
    println!("consis: {}", opt(report.consis));
    println!("term_consistency: {}", opt(report.term_consistency));
    println!("comet: {}", opt(report.comet));

    if let Some(base_dir) = &args.baseline {
        let baseline = evaluate_dir(base_dir, args, cfg.as_ref())?;
        let cmp = compare_reports(&baseline, &report)?;
        let out_dir = report_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::write(out_dir.join("comparison.json"), cmp.to_json())?;
        let table = cmp.render_table();
        fs::write(out_dir.join("comparison.txt"), &table)?;
        println!();
        print!("{table}");
    }
    Ok(EXIT_OK)
}

pub fn cmd_inspect_kg(args: &InspectArgs) -> Result<i32> {
    let path = args.transcript.join("graph.json");
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let graph = TransKG::deserialize(&bytes).with_context(|| path.display().to_string())?;
    let shown = match &args.term {
        Some(t) if !graph.has_node(t) => bail!("term `{t}` is not in the graph"),
        Some(t) => graph.restrict_to_term(t),
        None => graph,
    };
    print!("{}", shown.to_canonical_string());
    Ok(EXIT_OK)
}
