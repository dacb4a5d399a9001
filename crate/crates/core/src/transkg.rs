//! Translation knowledge graph.
//!
//! A [`TransKG`] collects what the pipeline knows about the unknown terms of
//! one source document: a node per term surface, an ordered list of
//! provenance-tagged triples, and the list of external documents the judge
//! admitted. Internal triples come first in extraction order, external
//! triples follow in document-admission order.
//!
//! Values are immutable: every operation returns a new graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agents::{JudgeVerdict, Verdict};
use crate::retrieval::RetrievedDocument;
use crate::text::{slice_chars, CharSpan};

/// Version written into serialized graph files.
pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("triple references unknown term `{0}`")]
    UnknownTermKey(String),
    #[error("triple has no term keys: ({0})")]
    NoTermKeys(String),
    #[error("triple has an empty component: ({0})")]
    EmptyComponent(String),
    #[error("expected {expected} provenance, found {found}")]
    ProvenanceMismatch { expected: String, found: String },
    #[error("verdict is for document `{verdict_doc}` but integrating `{doc}`")]
    VerdictMismatch { verdict_doc: String, doc: String },
    #[error("term candidate `{surface}` has invalid span {start}..{end}")]
    InvalidSpan { surface: String, start: usize, end: usize },
    #[error("graph parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported graph format version {0}")]
    UnsupportedVersion(u32),
    #[error("graph invariant violated: {0}")]
    Invariant(String),
}

/// Why the detector flagged a term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermCategory {
    Polyseme,
    Acronym,
    ProperNoun,
    NewTerm,
    LowConfidence,
}

impl TermCategory {
    pub const ALL: [TermCategory; 5] = [
        TermCategory::Polyseme,
        TermCategory::Acronym,
        TermCategory::ProperNoun,
        TermCategory::NewTerm,
        TermCategory::LowConfidence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TermCategory::Polyseme => "polyseme",
            TermCategory::Acronym => "acronym",
            TermCategory::ProperNoun => "proper_noun",
            TermCategory::NewTerm => "new_term",
            TermCategory::LowConfidence => "low_confidence",
        }
    }

    /// Lenient parse of a model-reported category ("Proper noun", "new-term").
    pub fn parse_loose(s: &str) -> Option<Self> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect();
        let norm = norm.trim_end_matches('s');
        TermCategory::ALL
            .into_iter()
            .find(|c| c.as_str().trim_end_matches('s') == norm)
    }
}

/// An unknown term located in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCandidate {
    pub surface: String,
    pub span: CharSpan,
    pub category: TermCategory,
    pub rationale: String,
}

impl TermCandidate {
    /// Checks that the span lies inside `source` and covers `surface`.
    pub fn validate(&self, source: &str) -> Result<(), GraphError> {
        let ok = self.span.start < self.span.end
            && slice_chars(source, self.span).is_some_and(|s| s == self.surface);
        if ok {
            Ok(())
        } else {
            Err(GraphError::InvalidSpan {
                surface: self.surface.clone(),
                start: self.span.start,
                end: self.span.end,
            })
        }
    }
}

/// Where a triple came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Extracted from the source text itself.
    Internal,
    /// Derived from an admitted external document.
    External { doc_id: String },
}

impl Provenance {
    pub fn is_internal(&self) -> bool {
        matches!(self, Provenance::Internal)
    }

    pub fn doc_id(&self) -> Option<&str> {
        match self {
            Provenance::Internal => None,
            Provenance::External { doc_id } => Some(doc_id),
        }
    }

    fn describe(&self) -> String {
        match self {
            Provenance::Internal => "internal".into(),
            Provenance::External { doc_id } => format!("external({doc_id})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub provenance: Provenance,
    /// Surfaces of the terms this fact informs.
    pub term_keys: BTreeSet<String>,
}

impl KnowledgeTriple {
    pub fn internal<I, S>(subject: &str, relation: &str, object: &str, keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(subject, relation, object, Provenance::Internal, keys)
    }

    pub fn external<I, S>(subject: &str, relation: &str, object: &str, doc_id: &str, keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let provenance = Provenance::External { doc_id: doc_id.to_string() };
        Self::new(subject, relation, object, provenance, keys)
    }

    pub fn new<I, S>(subject: &str, relation: &str, object: &str, provenance: Provenance, keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            subject: subject.to_string(),
            relation: relation.to_string(),
            object: object.to_string(),
            provenance,
            term_keys: keys.into_iter().map(Into::into).collect(),
        }
    }

    /// `(subject | relation | object)` rendering used in prompts and errors.
    pub fn display(&self) -> String {
        format!("{} | {} | {}", self.subject, self.relation, self.object)
    }

    fn same_fact(&self, other: &KnowledgeTriple) -> bool {
        self.subject == other.subject
            && self.relation == other.relation
            && self.object == other.object
            && self.provenance == other.provenance
    }

    fn check_shape(&self) -> Result<(), GraphError> {
        if [&self.subject, &self.relation, &self.object]
            .iter()
            .any(|s| s.trim().is_empty())
        {
            return Err(GraphError::EmptyComponent(self.display()));
        }
        if self.term_keys.is_empty() {
            return Err(GraphError::NoTermKeys(self.display()));
        }
        Ok(())
    }
}

/// One node per distinct term surface.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermNode {
    pub surface: String,
    pub category: TermCategory,
    /// Every detected occurrence, in detection order.
    pub spans: Vec<CharSpan>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransKG {
    pub source_doc_id: String,
    pub nodes: BTreeMap<String, TermNode>,
    pub triples: Vec<KnowledgeTriple>,
    pub accepted_docs: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    version: u32,
    source_doc_id: String,
    nodes: BTreeMap<String, TermNode>,
    triples: Vec<KnowledgeTriple>,
    accepted_docs: Vec<String>,
}

impl TransKG {
    /// Builds an empty graph with one node per distinct surface. Node keys are
    /// exact, case-sensitive surfaces; the first candidate for a surface sets
    /// its category.
    pub fn new(source_doc_id: impl Into<String>, terms: &[TermCandidate]) -> Self {
        let mut nodes: BTreeMap<String, TermNode> = BTreeMap::new();
        for term in terms {
            nodes
                .entry(term.surface.clone())
                .and_modify(|n| {
                    if !n.spans.contains(&term.span) {
                        n.spans.push(term.span);
                    }
                })
                .or_insert_with(|| TermNode {
                    surface: term.surface.clone(),
                    category: term.category,
                    spans: vec![term.span],
                    rationale: term.rationale.clone(),
                });
        }
        Self {
            source_doc_id: source_doc_id.into(),
            nodes,
            triples: Vec::new(),
            accepted_docs: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty() && self.accepted_docs.is_empty()
    }

    pub fn has_node(&self, surface: &str) -> bool {
        self.nodes.contains_key(surface)
    }

    /// Appends internally extracted triples, dropping exact duplicates.
    pub fn add_internal(&self, triples: &[KnowledgeTriple]) -> Result<TransKG, GraphError> {
        for t in triples {
            if !t.provenance.is_internal() {
                return Err(GraphError::ProvenanceMismatch {
                    expected: "internal".into(),
                    found: t.provenance.describe(),
                });
            }
            self.check_triple(t)?;
        }
        let mut next = self.clone();
        next.push_all(triples);
        Ok(next)
    }

    /// Admits `doc` and its triples when the verdict is CORRECT. An INCORRECT
    /// verdict returns the graph unchanged.
    pub fn integrate_external(
        &self,
        doc: &RetrievedDocument,
        verdict: &JudgeVerdict,
        triples: &[KnowledgeTriple],
    ) -> Result<TransKG, GraphError> {
        if verdict.doc_id != doc.id {
            return Err(GraphError::VerdictMismatch {
                verdict_doc: verdict.doc_id.clone(),
                doc: doc.id.clone(),
            });
        }
        self.check_external(doc, triples)?;
        match verdict.verdict {
            Verdict::Incorrect => Ok(self.clone()),
            Verdict::Correct => Ok(self.admit(doc, triples)),
        }
    }

    /// Admits `doc` without a verdict. Only used by the unrefined-graph
    /// ablation, where the judge is switched off.
    pub fn integrate_unjudged(
        &self,
        doc: &RetrievedDocument,
        triples: &[KnowledgeTriple],
    ) -> Result<TransKG, GraphError> {
        self.check_external(doc, triples)?;
        Ok(self.admit(doc, triples))
    }

    fn check_external(&self, doc: &RetrievedDocument, triples: &[KnowledgeTriple]) -> Result<(), GraphError> {
        for t in triples {
            if t.provenance.doc_id() != Some(doc.id.as_str()) {
                return Err(GraphError::ProvenanceMismatch {
                    expected: format!("external({})", doc.id),
                    found: t.provenance.describe(),
                });
            }
            self.check_triple(t)?;
        }
        Ok(())
    }

    fn admit(&self, doc: &RetrievedDocument, triples: &[KnowledgeTriple]) -> TransKG {
        let mut next = self.clone();
        if !next.accepted_docs.contains(&doc.id) {
            next.accepted_docs.push(doc.id.clone());
        }
        next.push_all(triples);
        next
    }

    fn check_triple(&self, t: &KnowledgeTriple) -> Result<(), GraphError> {
        t.check_shape()?;
        match t.term_keys.iter().find(|k| !self.nodes.contains_key(*k)) {
            Some(k) => Err(GraphError::UnknownTermKey(k.clone())),
            None => Ok(()),
        }
    }

    fn push_all(&mut self, triples: &[KnowledgeTriple]) {
        for t in triples {
            if !self.triples.iter().any(|e| e.same_fact(t)) {
                self.triples.push(t.clone());
            }
        }
    }

    /// Triples informing `surface`, in graph order.
    pub fn triples_for_term(&self, surface: &str) -> Vec<&KnowledgeTriple> {
        self.triples
            .iter()
            .filter(|t| t.term_keys.contains(surface))
            .collect()
    }

    pub fn internal_triples(&self) -> impl Iterator<Item = &KnowledgeTriple> {
        self.triples.iter().filter(|t| t.provenance.is_internal())
    }

    pub fn external_triples(&self) -> impl Iterator<Item = &KnowledgeTriple> {
        self.triples.iter().filter(|t| !t.provenance.is_internal())
    }

    /// Sub-graph restricted to one term node and the triples informing it.
    pub fn restrict_to_term(&self, surface: &str) -> TransKG {
        TransKG {
            source_doc_id: self.source_doc_id.clone(),
            nodes: self
                .nodes
                .iter()
                .filter(|(k, _)| k.as_str() == surface)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            triples: self.triples_for_term(surface).into_iter().cloned().collect(),
            accepted_docs: self.accepted_docs.clone(),
        }
    }

    /// Checks the structural invariants that deserialization cannot enforce.
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut seen = BTreeSet::new();
        for d in &self.accepted_docs {
            if !seen.insert(d) {
                return Err(GraphError::Invariant(format!("duplicate accepted document `{d}`")));
            }
        }
        for t in &self.triples {
            self.check_triple(t)?;
            if let Some(doc) = t.provenance.doc_id() {
                if !seen.contains(&doc.to_string()) {
                    return Err(GraphError::Invariant(format!(
                        "external triple ({}) cites unaccepted document `{doc}`",
                        t.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Canonical text form: pretty JSON, sorted node keys, fixed field order,
    /// trailing newline. Equal graphs produce identical bytes.
    pub fn to_canonical_string(&self) -> String {
        let file = GraphFile {
            version: GRAPH_FORMAT_VERSION,
            source_doc_id: self.source_doc_id.clone(),
            nodes: self.nodes.clone(),
            triples: self.triples.clone(),
            accepted_docs: self.accepted_docs.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn serialize(&self) -> Vec<u8> {
        self.to_canonical_string().into_bytes()
    }

    pub fn deserialize(bytes: &[u8]) -> Result<TransKG, GraphError> {
        let file: GraphFile = serde_json::from_slice(bytes).map_err(|e| GraphError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if file.version != GRAPH_FORMAT_VERSION {
            return Err(GraphError::UnsupportedVersion(file.version));
        }
        let graph = TransKG {
            source_doc_id: file.source_doc_id,
            nodes: file.nodes,
            triples: file.triples,
            accepted_docs: file.accepted_docs,
        };
        graph.validate()?;
        Ok(graph)
    }
}
