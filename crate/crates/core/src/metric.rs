//! Character n-gram F-score (chrF), used as the offline stand-in for the
//! remote neural scorer.
//!
//! Whitespace is removed before extracting n-grams of orders 1..=6.
//! Precision and recall are averaged over the orders where both sides have
//! at least one n-gram, then combined with beta = 2.

use std::collections::HashMap;

use crate::normalize::normalize_text;

pub const CHRF_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

fn ngram_counts(chars: &[char], n: usize) -> HashMap<&[char], u32> {
    let mut counts = HashMap::new();
    if chars.len() >= n {
        for gram in chars.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn strip_whitespace(text: &str) -> Vec<char> {
    normalize_text(text).chars().filter(|c| !c.is_whitespace()).collect()
}

/// chrF in [0, 100]. Inputs with no n-grams in common score 0.
pub fn compute_chrf(hypothesis: &str, reference: &str) -> f64 {
    let hyp = strip_whitespace(hypothesis);
    let refr = strip_whitespace(reference);

    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut effective = 0usize;
    for n in 1..=CHRF_ORDER {
        let h = ngram_counts(&hyp, n);
        let r = ngram_counts(&refr, n);
        let total_h: u32 = h.values().sum();
        let total_r: u32 = r.values().sum();
        if total_h == 0 || total_r == 0 {
            continue;
        }
        let matched: u32 = h
            .iter()
            .filter_map(|(gram, &ch)| r.get(gram).map(|&cr| ch.min(cr)))
            .sum();
        precision += f64::from(matched) / f64::from(total_h);
        recall += f64::from(matched) / f64::from(total_r);
        effective += 1;
    }
    if effective == 0 {
        return 0.0;
    }
    precision /= effective as f64;
    recall /= effective as f64;
    if precision + recall == 0.0 {
        return 0.0;
    }
    let b2 = CHRF_BETA * CHRF_BETA;
    100.0 * (1.0 + b2) * precision * recall / (b2 * precision + recall)
}
