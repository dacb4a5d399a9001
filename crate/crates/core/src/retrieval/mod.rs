//! External evidence sources behind one interface.

mod bm25;
mod glossary;
mod remote;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bm25::{read_corpus_jsonl, CorpusDoc, CorpusIndex, Posting, BM25_B, BM25_K1};
pub use glossary::{GlossaryEntry, GlossarySource};
pub use remote::{RemoteSearchClient, RemoteSearchConfig};

use crate::text::{slice_chars, context_window, Tokenizer};
use crate::transkg::TermCandidate;

pub const DEFAULT_N2: usize = 5;
pub const CONTEXT_TOKENS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentSource {
    LocalIndex,
    Glossary,
    Remote,
}

impl DocumentSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DocumentSource::LocalIndex => "local_index",
            DocumentSource::Glossary => "glossary",
            DocumentSource::Remote => "remote",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedDocument {
    pub id: String,
    pub title: String,
    pub text: String,
    pub source: DocumentSource,
    pub score: f64,
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("index file: {0}")]
    IndexFormat(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<RetrievalError>,
    },
    #[error("remote search: {0}")]
    Remote(String),
}

impl RetrievalError {
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        RetrievalError::File { path: path.into(), source: Box::new(self) }
    }
}

/// A configured evidence source.
pub trait EvidenceSource: Send + Sync {
    fn kind(&self) -> DocumentSource;
    fn name(&self) -> &str;
    /// `term` is the bare surface, `query` the surface plus context.
    fn retrieve(&self, term: &str, query: &str, k: usize) -> Result<Vec<RetrievedDocument>, RetrievalError>;
}

pub struct LocalIndexSource {
    name: String,
    index: CorpusIndex,
}

impl LocalIndexSource {
    pub fn new(name: impl Into<String>, index: CorpusIndex) -> Self {
        Self { name: name.into(), index }
    }

    pub fn index(&self) -> &CorpusIndex {
        &self.index
    }
}

impl EvidenceSource for LocalIndexSource {
    fn kind(&self) -> DocumentSource {
        DocumentSource::LocalIndex
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn retrieve(&self, _term: &str, query: &str, k: usize) -> Result<Vec<RetrievedDocument>, RetrievalError> {
        Ok(self.index.search(query, k))
    }
}

/// Documents for one term plus any per-source failures.
#[derive(Debug, Clone, Default)]
pub struct TermRetrieval {
    pub documents: Vec<RetrievedDocument>,
    pub warnings: Vec<String>,
}

/// Term surface followed by up to `CONTEXT_TOKENS` tokens on each side of its span.
pub fn build_query(term: &TermCandidate, source_text: &str, tokenizer: Tokenizer) -> String {
    let surface = slice_chars(source_text, term.span).unwrap_or(&term.surface);
    let (before, after) = context_window(source_text, term.span, CONTEXT_TOKENS, tokenizer);
    let mut parts = vec![surface.to_string()];
    parts.extend(before);
    parts.extend(after);
    parts.join(" ")
}

/// Queries every source in order and merges the results.
///
/// Duplicates by (source, id) are dropped, the total is capped at `n2`, and a
/// failing source contributes a warning instead of an error.
pub fn retrieve_for_term(
    term: &TermCandidate,
    source_text: &str,
    sources: &[Box<dyn EvidenceSource>],
    k_per_source: usize,
    n2: usize,
    tokenizer: Tokenizer,
) -> TermRetrieval {
    let query = build_query(term, source_text, tokenizer);
    let mut out = TermRetrieval::default();
    let mut seen = BTreeSet::new();
    for source in sources {
        if out.documents.len() >= n2 {
            break;
        }
        match source.retrieve(&term.surface, &query, k_per_source) {
            Ok(docs) => {
                for d in docs {
                    if out.documents.len() >= n2 {
                        break;
                    }
                    if seen.insert((d.source, d.id.clone())) {
                        out.documents.push(d);
                    }
                }
            }
            Err(e) => {
                log::warn!("source `{}` failed for `{}`: {e}", source.name(), term.surface);
                out.warnings
                    .push(format!("source `{}` skipped for `{}`: {e}", source.name(), term.surface));
            }
        }
    }
    out
}
