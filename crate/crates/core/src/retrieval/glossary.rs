//! Bilingual glossary read from TSV: `source_term<TAB>target_term<TAB>note`.

use std::fs;
use std::path::Path;

use super::{DocumentSource, EvidenceSource, RetrievalError, RetrievedDocument};
use crate::text::Tokenizer;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlossaryEntry {
    pub line: usize,
    pub source_term: String,
    pub target_term: String,
    pub note: String,
}

impl GlossaryEntry {
    fn to_document(&self, glossary: &str, score: f64) -> RetrievedDocument {
        let mut text = format!("{} → {}", self.source_term, self.target_term);
        if !self.note.is_empty() {
            text.push_str(": ");
            text.push_str(&self.note);
        }
        RetrievedDocument {
            id: format!("{glossary}:{}", self.line),
            title: self.source_term.clone(),
            text,
            source: DocumentSource::Glossary,
            score,
        }
    }
}

/// Matches entries on the term surface: 1.0 for an exact (case-insensitive)
/// match, 0.5 when the entry and term share a token.
#[derive(Debug, Clone)]
pub struct GlossarySource {
    name: String,
    entries: Vec<GlossaryEntry>,
}

impl GlossarySource {
    pub fn parse(name: impl Into<String>, tsv: &str) -> Result<Self, RetrievalError> {
        let mut entries = Vec::new();
        for (i, raw) in tsv.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let source_term = cols.next().unwrap_or("").trim();
            let target_term = cols.next().unwrap_or("").trim();
            let note = cols.next().unwrap_or("").trim();
            if cols.next().is_some() {
                return Err(RetrievalError::Parse { line: i + 1, message: "more than three columns".into() });
            }
            if source_term.is_empty() || target_term.is_empty() {
                return Err(RetrievalError::Parse {
                    line: i + 1,
                    message: "expected source_term<TAB>target_term[<TAB>note]".into(),
                });
            }
            entries.push(GlossaryEntry {
                line: i + 1,
                source_term: source_term.to_string(),
                target_term: target_term.to_string(),
                note: note.to_string(),
            });
        }
        Ok(Self { name: name.into(), entries })
    }

    /// Loads a TSV file; the source name is the file stem.
    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let text = fs::read_to_string(path).map_err(|e| RetrievalError::from(e).in_file(path))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "glossary".into());
        Self::parse(name, &text).map_err(|e| e.in_file(path))
    }

    pub fn entries(&self) -> &[GlossaryEntry] {
        &self.entries
    }

    pub fn lookup(&self, term: &str, k: usize) -> Vec<RetrievedDocument> {
        let key = term.trim().to_lowercase();
        let term_tokens = Tokenizer::ZhChar.tokenize(term);
        let mut hits: Vec<(f64, &GlossaryEntry)> = self
            .entries
            .iter()
            .filter_map(|e| {
                if e.source_term.to_lowercase() == key {
                    Some((1.0, e))
                } else {
                    let entry_tokens = Tokenizer::ZhChar.tokenize(&e.source_term);
                    term_tokens
                        .iter()
                        .any(|t| entry_tokens.contains(t))
                        .then_some((0.5, e))
                }
            })
            .collect();
        // stable sort keeps file order within a score
        hits.sort_by(|a, b| b.0.total_cmp(&a.0));
        hits.into_iter()
            .take(k)
            .map(|(score, e)| e.to_document(&self.name, score))
            .collect()
    }
}

impl EvidenceSource for GlossarySource {
    fn kind(&self) -> DocumentSource {
        DocumentSource::Glossary
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn retrieve(&self, term: &str, _query: &str, k: usize) -> Result<Vec<RetrievedDocument>, RetrievalError> {
        Ok(self.lookup(term, k))
    }
}
