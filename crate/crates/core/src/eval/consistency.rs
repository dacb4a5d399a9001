//! Deterministic term-consistency metric.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::pipeline::TranslationResult;
use crate::text::count_occurrences;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TermConsistency {
    /// Mean over qualifying terms; `None` when no term qualifies.
    pub score: Option<f64>,
    /// 1.0 or 0.0 per qualifying term.
    pub per_term: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

/// Scores each graph term that occurs at least twice in the source: 1 when
/// every reported rendering is identical, 0 otherwise.
///
/// Without a rendering map the metric is absent. A qualifying term missing
/// from the map is left out with a warning.
pub fn term_consistency(result: &TranslationResult) -> TermConsistency {
    let mut out = TermConsistency::default();
    let qualifying: Vec<&str> = result
        .graph
        .nodes
        .keys()
        .map(String::as_str)
        .filter(|t| count_occurrences(&result.source_text, t) >= 2)
        .collect();
    if qualifying.is_empty() {
        return out;
    }
    let Some(renderings) = &result.term_renderings else {
        out.warnings.push(format!(
            "{}: no term renderings reported; term consistency unavailable",
            result.source_doc_id
        ));
        return out;
    };
    for term in qualifying {
        match renderings.get(term).filter(|r| !r.is_empty()) {
            Some(list) => {
                let first = list[0].trim();
                let same = list.iter().all(|r| r.trim() == first);
                out.per_term.insert(term.to_string(), if same { 1.0 } else { 0.0 });
            }
            None => out
                .warnings
                .push(format!("{}: no renderings reported for `{term}`", result.source_doc_id)),
        }
    }
    if !out.per_term.is_empty() {
        out.score = Some(out.per_term.values().sum::<f64>() / out.per_term.len() as f64);
    }
    out
}
