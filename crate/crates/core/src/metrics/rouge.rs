use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeVariant {
    Rouge1,
    Rouge2,
    RougeL,
}

impl RougeVariant {
    pub const ALL: [RougeVariant; 3] = [RougeVariant::Rouge1, RougeVariant::Rouge2, RougeVariant::RougeL];

    pub fn name(self) -> &'static str {
        match self {
            RougeVariant::Rouge1 => "rouge1",
            RougeVariant::Rouge2 => "rouge2",
            RougeVariant::RougeL => "rougeL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RougeScore<F: Scalar> {
    pub precision: F,
    pub recall: F,
    pub f1: F,
    /// The reference had no tokens; all components are 0.
    #[serde(default)]
    pub empty_reference: bool,
}

impl<F: Scalar> RougeScore<F> {
    fn from_counts(overlap: usize, cand_total: usize, ref_total: usize) -> Self {
        let precision = if cand_total == 0 { F::zero() } else { F::ratio(overlap, cand_total) };
        let recall = if ref_total == 0 { F::zero() } else { F::ratio(overlap, ref_total) };
        let sum = precision + recall;
        let f1 = if sum > F::zero() { F::lit(2.0) * precision * recall / sum } else { F::zero() };
        RougeScore { precision, recall, f1, empty_reference: ref_total == 0 }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Longest common subsequence length by dynamic programming.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_tokens<F: Scalar>(candidate: &[String], reference: &[String], variant: RougeVariant) -> RougeScore<F> {
    match variant {
        RougeVariant::RougeL => RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len()),
        RougeVariant::Rouge1 | RougeVariant::Rouge2 => {
            let n = if variant == RougeVariant::Rouge1 { 1 } else { 2 };
            let cand = ngram_counts(candidate, n);
            let refs = ngram_counts(reference, n);
            let overlap = cand.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum();
            RougeScore::from_counts(overlap, cand.values().sum(), refs.values().sum())
        }
    }
}

/// ROUGE over lowercased alphanumeric tokens, no stemming.
pub fn rouge<F: Scalar>(candidate: &str, reference: &str, variant: RougeVariant) -> RougeScore<F> {
    rouge_tokens(&tokenize(candidate), &tokenize(reference), variant)
}
