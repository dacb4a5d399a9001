//! Inverted index with BM25 ranking.
//!
//! ```text
//! score(D, Q) = Σ_{q ∈ Q} idf(q) · tf(q,D)·(k1 + 1) / (tf(q,D) + k1·(1 − b + b·|D|/avgdl))
//! idf(q)      = ln(1 + (N − df(q) + 0.5) / (df(q) + 0.5))
//! ```
//!
//! Query terms are deduplicated. Documents without any query term are not
//! returned; ties are broken by ascending document id.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DocumentSource, RetrievalError, RetrievedDocument};
use crate::text::Tokenizer;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

const INDEX_HEADER: &str = "crat-bm25-index v1";

/// One corpus record as read from JSON Lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusDoc {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc_id: String,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredDoc {
    title: String,
    text: String,
    length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    tokenizer: Tokenizer,
    docs: BTreeMap<String, StoredDoc>,
    /// Term → postings sorted by document id.
    postings: BTreeMap<String, Vec<Posting>>,
    avg_doc_length: f64,
}

impl CorpusIndex {
    /// Indexes title and text of every document. The result does not depend on
    /// corpus order.
    pub fn build(corpus: &[CorpusDoc], tokenizer: Tokenizer) -> Result<Self, RetrievalError> {
        let mut docs = BTreeMap::new();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for doc in corpus {
            if docs.contains_key(&doc.id) {
                return Err(RetrievalError::DuplicateId(doc.id.clone()));
            }
            let tokens = tokenizer.tokenize(&format!("{}\n{}", doc.title, doc.text));
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term.to_string()).or_default().push(Posting {
                    doc_id: doc.id.clone(),
                    tf: count,
                });
            }
            docs.insert(
                doc.id.clone(),
                StoredDoc {
                    title: doc.title.clone(),
                    text: doc.text.clone(),
                    length: tokens.len(),
                },
            );
        }
        for list in postings.values_mut() {
            list.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        }
        let total: usize = docs.values().map(|d| d.length).sum();
        let avg_doc_length = if docs.is_empty() { 0.0 } else { total as f64 / docs.len() as f64 };
        Ok(Self { tokenizer, docs, postings, avg_doc_length })
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn tokenizer(&self) -> Tokenizer {
        self.tokenizer
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, id: &str) -> Option<usize> {
        self.docs.get(id).map(|d| d.length)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Top `k` documents by BM25 score.
    pub fn search(&self, query: &str, k: usize) -> Vec<RetrievedDocument> {
        if k == 0 || self.docs.is_empty() {
            return Vec::new();
        }
        let terms: BTreeSet<String> = self.tokenizer.tokenize(query).into_iter().collect();
        let n = self.docs.len() as f64;
        let avgdl = if self.avg_doc_length > 0.0 { self.avg_doc_length } else { 1.0 };
        let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
        for term in &terms {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let df = list.len() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            for p in list {
                let tf = p.tf as f64;
                let dl = self.docs[&p.doc_id].length as f64;
                let norm = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / avgdl);
                *scores.entry(p.doc_id.as_str()).or_insert(0.0) += idf * (tf * (BM25_K1 + 1.0)) / norm;
            }
        }
        let mut ranked: Vec<(&str, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked
            .into_iter()
            .take(k)
            .map(|(id, score)| {
                let d = &self.docs[id];
                RetrievedDocument {
                    id: id.to_string(),
                    title: d.title.clone(),
                    text: d.text.clone(),
                    source: DocumentSource::LocalIndex,
                    score,
                }
            })
            .collect()
    }

    /// Writes a version header line followed by the JSON index.
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let mut f = fs::File::create(path)?;
        writeln!(f, "{INDEX_HEADER}")?;
        serde_json::to_writer(&mut f, self).map_err(|e| RetrievalError::IndexFormat(e.to_string()))?;
        writeln!(f)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let raw = fs::read_to_string(path)?;
        let (header, body) = raw
            .split_once('\n')
            .ok_or_else(|| RetrievalError::IndexFormat("missing header".into()))?;
        if header.trim() != INDEX_HEADER {
            return Err(RetrievalError::IndexFormat(format!("unexpected header `{header}`")));
        }
        serde_json::from_str(body).map_err(|e| RetrievalError::IndexFormat(e.to_string()))
    }
}

/// Reads a JSON Lines corpus of `{id, title, text}` records. Blank lines are
/// skipped; errors carry the 1-based line number.
pub fn read_corpus_jsonl(path: &Path) -> Result<Vec<CorpusDoc>, RetrievalError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: CorpusDoc = serde_json::from_str(&line).map_err(|e| RetrievalError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Vec<CorpusDoc> {
        vec![
            CorpusDoc {
                id: "d1".into(),
                title: "Scotiabank".into(),
                text: "Scotia bank offers a savings plan. The bank is Canadian.".into(),
            },
            CorpusDoc {
                id: "d2".into(),
                title: "Scotia Sea".into(),
                text: "The Scotia Sea lies between the Southern Ocean and the South Atlantic.".into(),
            },
            CorpusDoc {
                id: "d3".into(),
                title: "River bank".into(),
                text: "A bank is the land alongside a river.".into(),
            },
        ]
    }

    #[test]
    fn empty_corpus() {
        let idx = CorpusIndex::build(&[], Tokenizer::Latin).unwrap();
        assert_eq!(idx.doc_count(), 0);
        assert!(idx.search("bank", 5).is_empty());
    }

    #[test]
    fn postings_match_hand_counts() {
        let idx = CorpusIndex::build(&toy(), Tokenizer::Latin).unwrap();
        // "bank": d1 title(0) + text "bank", "bank" = 2; d3 title "bank" + text "bank" = 2
        assert_eq!(
            idx.postings("bank"),
            &[Posting { doc_id: "d1".into(), tf: 2 }, Posting { doc_id: "d3".into(), tf: 2 }]
        );
        // "scotia": d1 text 1; d2 title 1 + text 1
        assert_eq!(
            idx.postings("scotia"),
            &[Posting { doc_id: "d1".into(), tf: 1 }, Posting { doc_id: "d2".into(), tf: 2 }]
        );
        assert_eq!(idx.postings("the"), &[
            Posting { doc_id: "d1".into(), tf: 1 },
            Posting { doc_id: "d2".into(), tf: 3 },
            Posting { doc_id: "d3".into(), tf: 1 },
        ]);
        // d1: "scotiabank" + 10 text tokens
        assert_eq!(idx.doc_length("d1"), Some(11));
        assert_eq!(idx.doc_length("d2"), Some(14));
        assert_eq!(idx.doc_length("d3"), Some(10));
        assert!((idx.avg_doc_length() - 35.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn order_independent() {
        let mut rev = toy();
        rev.reverse();
        assert_eq!(
            CorpusIndex::build(&toy(), Tokenizer::Latin).unwrap(),
            CorpusIndex::build(&rev, Tokenizer::Latin).unwrap()
        );
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut c = toy();
        c.push(c[0].clone());
        assert!(matches!(
            CorpusIndex::build(&c, Tokenizer::Latin),
            Err(RetrievalError::DuplicateId(_))
        ));
    }

    #[test]
    fn k_larger_than_corpus() {
        let idx = CorpusIndex::build(&toy(), Tokenizer::Latin).unwrap();
        let hits = idx.search("the bank", 10);
        assert_eq!(hits.len(), 3);
        assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(idx.search("", 3).is_empty());
        assert!(idx.search("zebra", 3).is_empty());
        assert!(idx.search("bank", 0).is_empty());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx");
        let idx = CorpusIndex::build(&toy(), Tokenizer::ZhChar).unwrap();
        idx.save(&path).unwrap();
        assert!(fs::read_to_string(&path).unwrap().starts_with(INDEX_HEADER));
        assert_eq!(CorpusIndex::load(&path).unwrap(), idx);
        fs::write(&path, "garbage\n{}").unwrap();
        assert!(CorpusIndex::load(&path).is_err());
    }

    #[test]
    fn corpus_jsonl_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(&path, "{\"id\":\"a\",\"title\":\"t\",\"text\":\"x\"}\n\n{bad\n").unwrap();
        match read_corpus_jsonl(&path) {
            Err(RetrievalError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
