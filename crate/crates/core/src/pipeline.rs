//! End-to-end orchestration: detect, extract, retrieve, judge, translate.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{
    detect_unknown_terms, extract_internal_knowledge, judge_document, translate_with_knowledge, AgentContext,
    AgentError, JudgeVerdict, KnowledgeBudget,
};
use crate::gateway::{ChatExchange, ChatParams, Gateway, ResponseCache};
use crate::retrieval::{retrieve_for_term, EvidenceSource, RetrievedDocument, DEFAULT_N2};
use crate::text::{LangPair, Tokenizer};
use crate::transkg::{GraphError, TermCandidate, TransKG};

/// Which stages run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    /// Translator only, no knowledge.
    Direct,
    /// Detection, extraction and retrieval, with every retrieved document
    /// admitted unjudged.
    Unrefined,
    #[default]
    Crat,
}

impl std::str::FromStr for PipelineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(PipelineMode::Direct),
            "unrefined" => Ok(PipelineMode::Unrefined),
            "crat" => Ok(PipelineMode::Crat),
            other => Err(format!("unknown mode `{other}` (expected crat, unrefined or direct)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Detect,
    Extract,
    Retrieve,
    Judge,
    Translate,
}

impl Stage {
    pub const ORDER: [Stage; 5] = [Stage::Detect, Stage::Extract, Stage::Retrieve, Stage::Judge, Stage::Translate];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorFallback {
    Fail,
    #[default]
    TranslateDirect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleBackends {
    pub detector: String,
    pub extractor: String,
    pub judge: String,
    pub translator: String,
}

impl RoleBackends {
    /// Every role served by the same backend.
    pub fn all(id: &str) -> Self {
        Self {
            detector: id.into(),
            extractor: id.into(),
            judge: id.into(),
            translator: id.into(),
        }
    }

    fn iter(&self) -> impl Iterator<Item = (&'static str, &str)> {
        [
            ("detector", self.detector.as_str()),
            ("extractor", self.extractor.as_str()),
            ("judge", self.judge.as_str()),
            ("translator", self.translator.as_str()),
        ]
        .into_iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    pub roles: RoleBackends,
    /// Cap on retrieved documents per term.
    pub n2: usize,
    pub k_per_source: usize,
    pub budget: KnowledgeBudget,
    pub on_detector_error: DetectorFallback,
    pub params: ChatParams,
    pub cache_dir: Option<PathBuf>,
    /// Documents processed concurrently by [`Pipeline::run_batch`].
    pub width: usize,
}

impl PipelineConfig {
    pub fn new(roles: RoleBackends) -> Self {
        Self {
            mode: PipelineMode::Crat,
            roles,
            n2: DEFAULT_N2,
            k_per_source: DEFAULT_N2,
            budget: KnowledgeBudget::default(),
            on_detector_error: DetectorFallback::TranslateDirect,
            params: ChatParams::default(),
            cache_dir: None,
            width: 1,
        }
    }

    pub fn with_mode(mut self, mode: PipelineMode) -> Self {
        self.mode = mode;
        self
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("{stage:?} stage: {source}")]
    Agent {
        stage: Stage,
        #[source]
        source: AgentError,
    },
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Exchanges and warnings of one executed stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub exchanges: Vec<ChatExchange>,
    pub warnings: Vec<String>,
}

/// Executed stages in order. Skipped stages are absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub stages: Vec<StageRecord>,
}

impl AgentTranscript {
    pub fn stage_sequence(&self) -> Vec<Stage> {
        self.stages.iter().map(|s| s.stage).collect()
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn exchanges(&self) -> impl Iterator<Item = &ChatExchange> {
        self.stages.iter().flat_map(|s| s.exchanges.iter())
    }

    /// True when stages are distinct and follow pipeline order.
    pub fn is_ordered(&self) -> bool {
        self.stages.windows(2).all(|w| w[0].stage < w[1].stage)
    }

    fn push(&mut self, stage: Stage, exchanges: Vec<ChatExchange>, warnings: Vec<String>) {
        self.stages.push(StageRecord { stage, exchanges, warnings });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDocuments {
    pub term: String,
    pub documents: Vec<RetrievedDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationResult {
    pub source_doc_id: String,
    pub source_text: String,
    pub lang_pair: String,
    pub mode: PipelineMode,
    pub target_text: String,
    pub term_renderings: Option<BTreeMap<String, Vec<String>>>,
    pub terms: Vec<TermCandidate>,
    pub graph: TransKG,
    pub retrievals: Vec<TermDocuments>,
    /// In judging order.
    pub verdicts: Vec<JudgeVerdict>,
    pub transcript: AgentTranscript,
    /// Milliseconds per executed stage.
    pub timings: BTreeMap<Stage, u64>,
    pub term_count: usize,
    pub judged_count: usize,
    pub accepted_count: usize,
    /// Set when detection failed and the text was translated directly.
    pub fallback: bool,
    pub warnings: Vec<String>,
}

impl TranslationResult {
    /// Copy with timings, latencies, cache flags and attempt counts zeroed.
    pub fn without_telemetry(&self) -> TranslationResult {
        let mut r = self.clone();
        for v in r.timings.values_mut() {
            *v = 0;
        }
        for stage in &mut r.transcript.stages {
            for ex in &mut stage.exchanges {
                *ex = ex.without_telemetry();
            }
        }
        r
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_canonical_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }
}

/// A document to translate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub id: String,
    pub text: String,
}

impl SourceDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub doc_id: String,
    pub status: RunStatus,
    pub term_count: usize,
    pub judged_count: usize,
    pub accepted_count: usize,
    pub timings: BTreeMap<Stage, u64>,
    pub fallback: bool,
    pub error: Option<String>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub mode: PipelineMode,
    pub documents: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub fallbacks: usize,
    /// Summed milliseconds per stage over successful documents.
    pub total_timings: BTreeMap<Stage, u64>,
    pub records: Vec<ManifestRecord>,
}

impl RunManifest {
    /// Writes `manifest.jsonl` (one record per document) and `run.json`
    /// (aggregates) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir)?;
        let mut lines = String::new();
        for r in &self.records {
            lines.push_str(&serde_json::to_string(r).expect("record serializes"));
            lines.push('\n');
        }
        write_atomic(&dir.join("manifest.jsonl"), lines.as_bytes())?;
        let mut summary = serde_json::to_value(self).expect("manifest serializes");
        summary.as_object_mut().expect("object").remove("records");
        let mut body = serde_json::to_string_pretty(&summary).expect("summary serializes");
        body.push('\n');
        write_atomic(&dir.join("run.json"), body.as_bytes())?;
        Ok(())
    }
}

pub struct BatchOutput {
    /// In input order.
    pub results: Vec<Result<TranslationResult, PipelineError>>,
    pub manifest: RunManifest,
}

/// Gateway, evidence sources and configuration for translating documents.
pub struct Pipeline {
    gateway: Gateway,
    sources: Vec<Box<dyn EvidenceSource>>,
    config: PipelineConfig,
    config_digest: Option<String>,
}

impl Pipeline {
    pub fn new(
        mut gateway: Gateway,
        sources: Vec<Box<dyn EvidenceSource>>,
        config: PipelineConfig,
    ) -> Result<Self, PipelineError> {
        for (role, id) in config.roles.iter() {
            if !gateway.has_backend(id) {
                return Err(PipelineError::Config(format!("{role} backend `{id}` is not registered")));
            }
        }
        if config.n2 == 0 {
            return Err(PipelineError::Config("n2 must be at least 1".into()));
        }
        if config.width == 0 {
            return Err(PipelineError::Config("width must be at least 1".into()));
        }
        if config.budget.max_triples == 0 && config.budget.max_documents == 0 {
            log::warn!("knowledge budget admits nothing; the translator will see no knowledge");
        }
        if let Some(dir) = &config.cache_dir {
            gateway.set_cache(Some(ResponseCache::new(dir.clone())));
        }
        Ok(Self { gateway, sources, config, config_digest: None })
    }

    /// Reports `digest` as the config hash instead of hashing [`PipelineConfig`].
    pub fn with_config_digest(mut self, digest: String) -> Self {
        self.config_digest = Some(digest);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// SHA-256 over the configuration and the names of the evidence sources,
    /// unless a digest was supplied.
    pub fn config_hash(&self) -> String {
        if let Some(d) = &self.config_digest {
            return d.clone();
        }
        let sources: Vec<String> = self
            .sources
            .iter()
            .map(|s| format!("{}:{}", s.kind().as_str(), s.name()))
            .collect();
        let value = serde_json::json!({ "config": self.config, "sources": sources });
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    fn ctx<'a>(&'a self, backend: &'a str) -> AgentContext<'a> {
        AgentContext::new(&self.gateway, backend, &self.config.params)
    }

    /// Translates one document.
    pub fn run(&self, doc: &SourceDocument, pair: LangPair) -> Result<TranslationResult, PipelineError> {
        let mode = self.config.mode;
        let mut transcript = AgentTranscript::default();
        let mut timings = BTreeMap::new();
        let mut warnings = Vec::new();
        let mut fallback = false;
        let mut terms = Vec::new();
        let mut graph = TransKG::new(doc.id.clone(), &[]);
        let mut retrievals = Vec::new();
        let mut verdicts = Vec::new();
        let mut judged_count = 0;

        if mode != PipelineMode::Direct {
            let t = Instant::now();
            match detect_unknown_terms(&self.ctx(&self.config.roles.detector), &doc.text, pair) {
                Ok(out) => {
                    terms = out.parsed;
                    transcript.push(Stage::Detect, out.exchanges, out.warnings);
                }
                Err(e) if self.config.on_detector_error == DetectorFallback::TranslateDirect => {
                    let msg = format!("detector failed, translating directly: {e}");
                    log::warn!("{}: {msg}", doc.id);
                    warnings.push(msg.clone());
                    transcript.push(Stage::Detect, e.exchanges, vec![msg]);
                    fallback = true;
                }
                Err(e) => return Err(PipelineError::Agent { stage: Stage::Detect, source: e }),
            }
            timings.insert(Stage::Detect, elapsed_ms(t));
        }

        if mode != PipelineMode::Direct && !fallback {
            graph = TransKG::new(doc.id.clone(), &terms);

            let t = Instant::now();
            match extract_internal_knowledge(&self.ctx(&self.config.roles.extractor), &doc.text, &terms, pair) {
                Ok(out) => {
                    graph = graph.add_internal(&out.parsed)?;
                    transcript.push(Stage::Extract, out.exchanges, out.warnings);
                }
                Err(e) => {
                    let msg = format!("extractor failed, continuing without internal knowledge: {e}");
                    log::warn!("{}: {msg}", doc.id);
                    warnings.push(msg.clone());
                    transcript.push(Stage::Extract, e.exchanges, vec![msg]);
                }
            }
            timings.insert(Stage::Extract, elapsed_ms(t));

            if !terms.is_empty() {
                let t = Instant::now();
                let tokenizer = Tokenizer::for_lang(pair.source);
                let mut retrieve_warnings = Vec::new();
                for term in &terms {
                    let r = retrieve_for_term(
                        term,
                        &doc.text,
                        &self.sources,
                        self.config.k_per_source,
                        self.config.n2,
                        tokenizer,
                    );
                    retrieve_warnings.extend(r.warnings);
                    retrievals.push(TermDocuments { term: term.surface.clone(), documents: r.documents });
                }
                warnings.extend(retrieve_warnings.iter().cloned());
                transcript.push(Stage::Retrieve, Vec::new(), retrieve_warnings);
                timings.insert(Stage::Retrieve, elapsed_ms(t));

                let t = Instant::now();
                if mode == PipelineMode::Crat {
                    let jobs: Vec<(&TermCandidate, &RetrievedDocument)> = terms
                        .iter()
                        .zip(&retrievals)
                        .flat_map(|(term, r)| r.documents.iter().map(move |d| (term, d)))
                        .collect();
                    let internal: Vec<_> = graph.internal_triples().cloned().collect();
                    let ctx = self.ctx(&self.config.roles.judge);
                    let outcomes: Vec<_> = jobs
                        .par_iter()
                        .map(|(term, d)| judge_document(&ctx, &internal, d, &doc.text, term, pair))
                        .collect();
                    let mut exchanges = Vec::new();
                    let mut judge_warnings = Vec::new();
                    for ((_, d), outcome) in jobs.iter().zip(outcomes) {
                        graph = graph.integrate_external(d, &outcome.verdict, &outcome.triples)?;
                        exchanges.extend(outcome.exchanges);
                        judge_warnings.extend(outcome.warnings);
                        verdicts.push(outcome.verdict);
                    }
                    judged_count = verdicts.len();
                    warnings.extend(judge_warnings.iter().cloned());
                    transcript.push(Stage::Judge, exchanges, judge_warnings);
                    timings.insert(Stage::Judge, elapsed_ms(t));
                } else {
                    for r in &retrievals {
                        for d in &r.documents {
                            graph = graph.integrate_unjudged(d, &[])?;
                        }
                    }
                }
            }
        }

        let t = Instant::now();
        let all_docs: Vec<RetrievedDocument> = retrievals.iter().flat_map(|r| r.documents.iter().cloned()).collect();
        let out = translate_with_knowledge(
            &self.ctx(&self.config.roles.translator),
            &doc.text,
            &graph,
            &all_docs,
            pair,
            &self.config.budget,
        )
        .map_err(|e| PipelineError::Agent { stage: Stage::Translate, source: e })?;
        warnings.extend(out.warnings.iter().cloned());
        transcript.push(Stage::Translate, out.exchanges, out.warnings);
        timings.insert(Stage::Translate, elapsed_ms(t));

        debug_assert!(transcript.is_ordered());
        Ok(TranslationResult {
            source_doc_id: doc.id.clone(),
            source_text: doc.text.clone(),
            lang_pair: pair.to_string(),
            mode,
            target_text: out.parsed.translation,
            term_renderings: out.parsed.term_renderings,
            term_count: terms.len(),
            accepted_count: graph.accepted_docs.len(),
            judged_count,
            terms,
            graph,
            retrievals,
            verdicts,
            transcript,
            timings,
            fallback,
            warnings,
        })
    }

    /// Translates `docs` with up to `width` running at once. Results and
    /// manifest records keep input order; failures do not stop the batch.
    pub fn run_batch(&self, docs: &[SourceDocument], pair: LangPair) -> BatchOutput {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.width)
            .build()
            .expect("thread pool");
        let results: Vec<_> = pool.install(|| docs.par_iter().map(|d| self.run(d, pair)).collect());
        let config_hash = self.config_hash();
        let mut total_timings = BTreeMap::new();
        let records: Vec<ManifestRecord> = docs
            .iter()
            .zip(&results)
            .map(|(doc, r)| match r {
                Ok(res) => {
                    for (stage, ms) in &res.timings {
                        *total_timings.entry(*stage).or_insert(0) += ms;
                    }
                    ManifestRecord {
                        doc_id: doc.id.clone(),
                        status: RunStatus::Ok,
                        term_count: res.term_count,
                        judged_count: res.judged_count,
                        accepted_count: res.accepted_count,
                        timings: res.timings.clone(),
                        fallback: res.fallback,
                        error: None,
                        config_hash: config_hash.clone(),
                    }
                }
                Err(e) => {
                    log::error!("{}: {e}", doc.id);
                    ManifestRecord {
                        doc_id: doc.id.clone(),
                        status: RunStatus::Failed,
                        term_count: 0,
                        judged_count: 0,
                        accepted_count: 0,
                        timings: BTreeMap::new(),
                        fallback: false,
                        error: Some(e.to_string()),
                        config_hash: config_hash.clone(),
                    }
                }
            })
            .collect();
        let failed = records.iter().filter(|r| r.status == RunStatus::Failed).count();
        let manifest = RunManifest {
            config_hash,
            mode: self.config.mode,
            documents: docs.len(),
            succeeded: docs.len() - failed,
            failed,
            fallbacks: records.iter().filter(|r| r.fallback).count(),
            total_timings,
            records,
        };
        BatchOutput { results, manifest }
    }
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

/// Directory name for a document id: characters outside `[A-Za-z0-9._-]`
/// become `_`.
pub fn doc_dir_name(doc_id: &str) -> String {
    let name: String = doc_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    match name.as_str() {
        "" | "." | ".." => format!("_{name}"),
        _ => name,
    }
}

/// Writes `<dir>/<doc>/{result.json, graph.json, transcript.json}` with
/// telemetry stripped, so identical runs produce identical files.
pub fn write_transcript(result: &TranslationResult, dir: &Path) -> Result<PathBuf, PipelineError> {
    let out = dir.join(doc_dir_name(&result.source_doc_id));
    fs::create_dir_all(&out)?;
    let clean = result.without_telemetry();
    write_atomic(&out.join("result.json"), clean.to_canonical_string().as_bytes())?;
    write_atomic(&out.join("graph.json"), &clean.graph.serialize())?;
    let mut transcript = serde_json::to_string_pretty(&clean.transcript).expect("transcript serializes");
    transcript.push('\n');
    write_atomic(&out.join("transcript.json"), transcript.as_bytes())?;
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let parent = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Reads `result.json` written by [`write_transcript`].
pub fn read_result(path: &Path) -> Result<TranslationResult, PipelineError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Io(std::io::Error::other(format!("{}: {e}", path.display()))))
}

/// Whether `stages` is a subsequence of the full pipeline order.
pub fn conforms_to_order(stages: &[Stage]) -> bool {
    let mut it = Stage::ORDER.iter();
    stages.iter().all(|s| it.any(|o| o == s))
}
