//! File-backed run configuration (TOML).
//!
//! ```toml
//! [backends.gpt]
//! kind = "http"
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! model = "gpt-4o"
//! auth_token_env = "OPENAI_API_KEY"
//!
//! [backends.fixture]
//! kind = "builtin"
//! fixture = "bank-scotia"
//!
//! [roles]
//! detector = "gpt"
//! extractor = "gpt"
//! judge = "gpt"
//! translator = "gpt"
//!
//! [retrieval]
//! index = "wiki.idx"
//! glossaries = ["terms.tsv", "builtin:bank-scotia"]
//! n2 = 5
//!
//! [pipeline]
//! width = 4
//! cache_dir = ".crat-cache"
//!
//! [eval]
//! consis_backend = "gpt"
//! ```
//!
//! Relative paths resolve against the config file's directory. Secrets are
//! only ever read from the environment, so they never enter the config hash.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::KnowledgeBudget;
use crate::fixtures;
use crate::gateway::{ChatParams, Fallback, Gateway, HttpBackendConfig, MockBackend, DEFAULT_MAX_TOKENS_CEILING};
use crate::pipeline::{DetectorFallback, Pipeline, PipelineConfig, PipelineMode, RoleBackends};
use crate::retrieval::{
    CorpusIndex, DocumentSource, EvidenceSource, GlossarySource, LocalIndexSource, RemoteSearchClient,
    RemoteSearchConfig, DEFAULT_N2,
};

const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("backend `{id}`: {message}")]
    Backend { id: String, message: String },
    #[error("retrieval: {0}")]
    Retrieval(#[from] crate::retrieval::RetrievalError),
    #[error(transparent)]
    Pipeline(#[from] crate::pipeline::PipelineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendSpec {
    Http {
        endpoint: String,
        model: String,
        auth_token_env: String,
        #[serde(default = "default_http_timeout")]
        timeout_secs: u64,
    },
    /// Scripted replies from a JSON file, see [`MockScript`].
    Mock { script: PathBuf },
    /// A rule-based fixture compiled into the binary.
    Builtin { fixture: String },
}

fn default_http_timeout() -> u64 {
    120
}

/// Contents of a mock script file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default)]
    pub contains: Option<String>,
    #[serde(default)]
    pub fingerprint: Option<String>,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolesSection {
    pub detector: String,
    pub extractor: String,
    pub judge: String,
    pub translator: String,
}

fn default_order() -> Vec<DocumentSource> {
    vec![DocumentSource::Glossary, DocumentSource::LocalIndex, DocumentSource::Remote]
}

fn default_n2() -> usize {
    DEFAULT_N2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalSection {
    #[serde(default)]
    pub index: Option<PathBuf>,
    /// TSV paths, or `builtin:<fixture>`.
    #[serde(default)]
    pub glossaries: Vec<String>,
    #[serde(default)]
    pub remote: Option<RemoteSearchConfig>,
    #[serde(default = "default_n2")]
    pub n2: usize,
    #[serde(default = "default_n2")]
    pub k_per_source: usize,
    /// Order in which source kinds are queried and merged.
    #[serde(default = "default_order")]
    pub order: Vec<DocumentSource>,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            index: None,
            glossaries: Vec::new(),
            remote: None,
            n2: DEFAULT_N2,
            k_per_source: DEFAULT_N2,
            order: default_order(),
        }
    }
}

fn default_width() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from(".crat-cache")
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS_CEILING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    #[serde(default)]
    pub mode: PipelineMode,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_true")]
    pub cache: bool,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default)]
    pub on_detector_error: DetectorFallback,
    #[serde(default)]
    pub budget: KnowledgeBudget,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_new_tokens: u32,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            mode: PipelineMode::Crat,
            width: 1,
            cache: true,
            cache_dir: default_cache_dir(),
            on_detector_error: DetectorFallback::TranslateDirect,
            budget: KnowledgeBudget::default(),
            temperature: 0.0,
            max_new_tokens: DEFAULT_MAX_TOKENS_CEILING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default)]
    pub consis_backend: Option<String>,
    #[serde(default = "default_true")]
    pub consis: bool,
    #[serde(default = "default_true")]
    pub term_consistency: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { consis_backend: None, consis: true, term_consistency: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub backends: BTreeMap<String, BackendSpec>,
    pub roles: RolesSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub eval: EvalSection,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: PathBuf) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text)?;
        cfg.base_dir = base_dir;
        cfg.validate()?;
        Ok(cfg)
    }

    /// All roles on the built-in bank/Scotia fixture with its glossary and no
    /// response cache.
    pub fn builtin_bank_scotia() -> Self {
        let id = fixtures::BANK_SCOTIA_BACKEND.to_string();
        RunConfig {
            backends: BTreeMap::from([(id.clone(), BackendSpec::Builtin { fixture: id.clone() })]),
            roles: RolesSection {
                detector: id.clone(),
                extractor: id.clone(),
                judge: id.clone(),
                translator: id.clone(),
            },
            retrieval: RetrievalSection {
                glossaries: vec![format!("{BUILTIN_PREFIX}{id}")],
                ..Default::default()
            },
            pipeline: PipelineSection { cache: false, ..Default::default() },
            eval: EvalSection { consis_backend: Some(id), ..Default::default() },
            base_dir: PathBuf::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        for (role, id) in self.role_pairs() {
            if !self.backends.contains_key(id) {
                return invalid(format!("role {role} refers to unknown backend `{id}`"));
            }
        }
        if let Some(id) = &self.eval.consis_backend {
            if !self.backends.contains_key(id) {
                return invalid(format!("eval.consis_backend refers to unknown backend `{id}`"));
            }
        }
        for (id, spec) in &self.backends {
            if let BackendSpec::Builtin { fixture } = spec {
                if fixture != fixtures::BANK_SCOTIA_BACKEND {
                    return invalid(format!("backend `{id}`: unknown builtin fixture `{fixture}`"));
                }
            }
        }
        for g in &self.retrieval.glossaries {
            if let Some(name) = g.strip_prefix(BUILTIN_PREFIX) {
                if name != fixtures::BANK_SCOTIA_BACKEND {
                    return invalid(format!("unknown builtin glossary `{name}`"));
                }
            }
        }
        if self.retrieval.n2 == 0 {
            return invalid("retrieval.n2 must be at least 1".into());
        }
        if self.pipeline.width == 0 {
            return invalid("pipeline.width must be at least 1".into());
        }
        let distinct: BTreeSet<_> = self.retrieval.order.iter().collect();
        if distinct.len() != self.retrieval.order.len() {
            return invalid("retrieval.order lists a source kind twice".into());
        }
        if !(self.pipeline.temperature.is_finite() && self.pipeline.temperature >= 0.0) {
            return invalid("pipeline.temperature must be a non-negative number".into());
        }
        Ok(())
    }

    fn role_pairs(&self) -> [(&'static str, &str); 4] {
        [
            ("detector", &self.roles.detector),
            ("extractor", &self.roles.extractor),
            ("judge", &self.roles.judge),
            ("translator", &self.roles.translator),
        ]
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    /// Registers every backend referenced by a role or by CONSIS.
    pub fn build_gateway(&self) -> Result<Gateway, ConfigError> {
        let mut used: BTreeSet<&str> = self.role_pairs().iter().map(|(_, id)| *id).collect();
        if let Some(id) = &self.eval.consis_backend {
            used.insert(id);
        }
        let mut gw = Gateway::new().with_max_tokens_ceiling(self.pipeline.max_new_tokens.max(DEFAULT_MAX_TOKENS_CEILING));
        for id in used {
            let err = |message: String| ConfigError::Backend { id: id.to_string(), message };
            match &self.backends[id] {
                BackendSpec::Http { endpoint, model, auth_token_env, timeout_secs } => {
                    let mut c = HttpBackendConfig::new(id, endpoint, auth_token_env, model);
                    c.timeout = Duration::from_secs(*timeout_secs);
                    gw.register_http(c).map_err(|e| err(e.to_string()))?;
                }
                BackendSpec::Mock { script } => {
                    let path = self.resolve(script);
                    let text = fs::read_to_string(&path).map_err(|e| err(format!("{}: {e}", path.display())))?;
                    let script: MockScript =
                        serde_json::from_str(&text).map_err(|e| err(format!("{}: {e}", path.display())))?;
                    gw.register_mock(id, script.into_backend().map_err(err)?)
                        .map_err(|e| ConfigError::Backend { id: id.to_string(), message: e.to_string() })?;
                }
                BackendSpec::Builtin { .. } => {
                    gw.register_mock(id, fixtures::bank_scotia_backend())
                        .map_err(|e| err(e.to_string()))?;
                }
            }
        }
        Ok(gw)
    }

    /// Evidence sources in configured order.
    pub fn build_sources(&self) -> Result<Vec<Box<dyn EvidenceSource>>, ConfigError> {
        let mut sources: Vec<Box<dyn EvidenceSource>> = Vec::new();
        for kind in &self.retrieval.order {
            match kind {
                DocumentSource::Glossary => {
                    for g in &self.retrieval.glossaries {
                        if g.strip_prefix(BUILTIN_PREFIX).is_some() {
                            sources.push(Box::new(fixtures::bank_scotia_glossary()));
                        } else {
                            sources.push(Box::new(GlossarySource::load(&self.resolve(Path::new(g)))?));
                        }
                    }
                }
                DocumentSource::LocalIndex => {
                    if let Some(p) = &self.retrieval.index {
                        let path = self.resolve(p);
                        let index = CorpusIndex::load(&path).map_err(|e| e.in_file(&path))?;
                        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                        sources.push(Box::new(LocalIndexSource::new(name, index)));
                    }
                }
                DocumentSource::Remote => {
                    if let Some(r) = &self.retrieval.remote {
                        sources.push(Box::new(RemoteSearchClient::new(r)?));
                    }
                }
            }
        }
        Ok(sources)
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let p = &self.pipeline;
        PipelineConfig {
            mode: p.mode,
            roles: RoleBackends {
                detector: self.roles.detector.clone(),
                extractor: self.roles.extractor.clone(),
                judge: self.roles.judge.clone(),
                translator: self.roles.translator.clone(),
            },
            n2: self.retrieval.n2,
            k_per_source: self.retrieval.k_per_source,
            budget: p.budget,
            on_detector_error: p.on_detector_error,
            params: ChatParams {
                temperature: p.temperature,
                max_new_tokens: p.max_new_tokens,
                stop: None,
            },
            cache_dir: p.cache.then(|| self.resolve(&p.cache_dir)),
            width: p.width,
        }
    }

    /// Gateway, sources and pipeline config assembled; the pipeline reports
    /// this file's hash in manifests.
    pub fn build_pipeline(&self) -> Result<Pipeline, ConfigError> {
        let pipeline = Pipeline::new(self.build_gateway()?, self.build_sources()?, self.pipeline_config())?;
        Ok(pipeline.with_config_digest(self.config_hash()))
    }
}

impl MockScript {
    pub fn into_backend(self) -> Result<MockBackend, String> {
        let mut mock = MockBackend::new();
        for (i, rule) in self.rules.into_iter().enumerate() {
            mock = match (rule.contains, rule.fingerprint) {
                (Some(c), None) => mock.on_contains(c, rule.reply),
                (None, Some(f)) => mock.on_fingerprint(f, rule.reply),
                _ => return Err(format!("rule {i}: set exactly one of `contains` or `fingerprint`")),
            };
        }
        if let Some(f) = self.fallback {
            mock = mock.with_fallback(Fallback::Text(f));
        }
        Ok(mock)
    }
}
