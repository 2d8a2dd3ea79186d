//! ROUGE-N and ROUGE-L over lowercased whitespace tokens.

use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    const ZERO: RougeScore = RougeScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        if overlap == 0 || candidate_total == 0 || reference_total == 0 {
            return Self::ZERO;
        }
        let precision = overlap as f64 / candidate_total as f64;
        let recall = overlap as f64 / reference_total as f64;
        let f1 = 2.0 * precision * recall / (precision + recall);
        Self { precision, recall, f1 }
    }
}

fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

pub fn rouge_n_score(candidate: &str, reference: &str, n: usize) -> RougeScore {
    let (cand, refs) = (tokens(candidate), tokens(reference));
    let (cc, rc) = (ngram_counts(&cand, n), ngram_counts(&refs, n));
    let overlap: usize = cc
        .iter()
        .map(|(gram, c)| rc.get(gram).map_or(0, |r| (*c).min(*r)))
        .sum();
    RougeScore::from_counts(overlap, cc.values().sum(), rc.values().sum())
}

/// ROUGE-N F1; 0.0 when either side is empty or too short for `n`.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> f64 {
    rouge_n_score(candidate, reference, n).f1
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y { prev[j] + 1 } else { row[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

pub fn rouge_l_score(candidate: &str, reference: &str) -> RougeScore {
    let (cand, refs) = (tokens(candidate), tokens(reference));
    RougeScore::from_counts(lcs_len(&cand, &refs), cand.len(), refs.len())
}

pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    rouge_l_score(candidate, reference).f1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basics() {
        assert_eq!(rouge_n("the cat sat", "the cat sat", 1), 1.0);
        assert_eq!(rouge_l("The Cat sat", "the cat SAT"), 1.0);
        assert_eq!(rouge_n("a b", "c d", 1), 0.0);
        assert_eq!(rouge_l("a b", "c d"), 0.0);
        assert_eq!(rouge_n("", "c d", 1), 0.0);
        assert_eq!(rouge_l("a", ""), 0.0);
        assert!((rouge_n("the cat sat", "the cat ran", 1) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn precision_recall_asymmetry() {
        let s = rouge_n_score("the cat", "the cat sat down", 1);
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
        let t = rouge_n_score("the cat sat down", "the cat", 1);
        assert_eq!((t.precision, t.recall), (0.5, 1.0));
        assert_eq!(s.f1, t.f1);
    }

    #[test]
    fn lcs_and_bigrams() {
        // LCS of "a b c d" and "a c b d" has length 3.
        let s = rouge_l_score("a b c d", "a c b d");
        assert!((s.f1 - 0.75).abs() < 1e-12);
        // Bigrams: {ab, bc, cd} vs {ab, bd}: one shared.
        let b = rouge_n_score("a b c d", "a b d", 2);
        assert!((b.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((b.recall - 0.5).abs() < 1e-12);
        // Clipped counts: "the the the" vs "the".
        let c = rouge_n_score("the the the", "the", 1);
        assert!((c.precision - 1.0 / 3.0).abs() < 1e-12);
    }
}
