//! Corpus-level BLEU-4.
//!
//! ```text
//! p_n  = Σ clipped n-gram matches / Σ candidate n-grams      (n = 1..4)
//! BP   = min(1, exp(1 − r/c))
//! BLEU = 100 · BP · exp(¼ Σ ln p_n)
//! ```
//!
//! Counts are summed over the whole corpus before dividing. A zero `p_n` is
//! smoothed to `(0 + 1) / (total + 1)`; non-zero precisions are left alone so
//! identical inputs score exactly 100.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::text::{bleu_tokens, Lang};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for BLEU; sums of these give corpus statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NgramStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub candidate_len: u64,
    pub reference_len: u64,
}

impl NgramStats {
    pub fn from_tokens<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Self {
        let cand: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
        let refs: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
        let mut stats = NgramStats {
            candidate_len: cand.len() as u64,
            reference_len: refs.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(&refs, n);
            let cand_counts = ngram_counts(&cand, n);
            stats.totals[n - 1] = cand.len().saturating_sub(n - 1) as u64;
            stats.matches[n - 1] = cand_counts
                .iter()
                .map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum();
        }
        stats
    }

    pub fn add(&mut self, other: &NgramStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    pub fn brevity_penalty(&self) -> f64 {
        let (c, r) = (self.candidate_len as f64, self.reference_len as f64);
        if self.candidate_len == 0 {
            return if self.reference_len == 0 { 1.0 } else { 0.0 };
        }
        (1.0 - r / c).exp().min(1.0)
    }

    /// Precision for order `n` (1-based), smoothed when zero.
    pub fn precision(&self, n: usize) -> f64 {
        let (m, t) = (self.matches[n - 1], self.totals[n - 1]);
        if m == 0 {
            1.0 / (t as f64 + 1.0)
        } else {
            m as f64 / t as f64
        }
    }

    /// BLEU in `[0, 100]`.
    pub fn bleu(&self) -> f64 {
        let bp = self.brevity_penalty();
        if bp == 0.0 {
            return 0.0;
        }
        let log_sum: f64 = (1..=MAX_ORDER).map(|n| self.precision(n).ln()).sum();
        100.0 * bp * (log_sum / MAX_ORDER as f64).exp()
    }
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

pub fn sentence_stats(candidate: &str, reference: &str, target: Lang) -> NgramStats {
    NgramStats::from_tokens(&bleu_tokens(candidate, target), &bleu_tokens(reference, target))
}

/// Corpus BLEU-4 over aligned candidate/reference lists.
pub fn corpus_bleu<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[R],
    target: Lang,
) -> Result<f64, EvalError> {
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut total = NgramStats::default();
    for (c, r) in candidates.iter().zip(references) {
        total.add(&sentence_stats(c.as_ref(), r.as_ref(), target));
    }
    Ok(total.bleu())
}
