//! Extractive summarization baseline: score sentences by damped graph
//! centrality over token-overlap similarity and keep the top-n, re-ordered
//! by original position.
//!
//! Edge weight between two sentences is |tokens_i ∩ tokens_j| divided by
//! ln|tokens_i| + ln|tokens_j| (unique-token sets, denominator floored at
//! 1e-9). Centrality power-iterates
//!
//! ```text
//! s_i <- (1 - d) + d * sum_j w_ji / out_j * s_j
//! ```
//!
//! with dangling mass redistributed uniformly, so converged scores sum to
//! the sentence count. The output is verbatim input sentences, which is the
//! extractive guarantee: summary tokens are always grounded in the source.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::text::token_set;

pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Sentences shorter than this many tokens are dropped at split time.
pub const MIN_SENTENCE_TOKENS: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TextRankError {
    #[error("no sentences survive preprocessing")]
    EmptySummary,
    #[error("n_sentences must be >= 1")]
    BadLength,
    #[error("damping must lie in (0, 1), got {0}")]
    BadDamping(f64),
}

/// Splits texts on sentence-terminal punctuation (., !, ?) followed by
/// whitespace or end of text; trims, strips the terminal run, and drops
/// sentences with fewer than [`MIN_SENTENCE_TOKENS`] tokens.
pub fn split_sentences(texts: &[&str]) -> Vec<String> {
    let mut sentences = Vec::new();
    for text in texts {
        let mut current = String::new();
        let mut chars = text.chars().peekable();
        while let Some(ch) = chars.next() {
            if matches!(ch, '.' | '!' | '?') {
                // absorb the whole terminal run
                let mut run = String::new();
                run.push(ch);
                while matches!(chars.peek(), Some('.') | Some('!') | Some('?')) {
                    run.push(chars.next().expect("peeked"));
                }
                let at_boundary = match chars.peek() {
                    None => true,
                    Some(c) => c.is_whitespace(),
                };
                if at_boundary {
                    push_sentence(&mut sentences, &current);
                    current.clear();
                } else {
                    // mid-token punctuation (decimals, ellipses glued to
                    // words) stays in the sentence
                    current.push_str(&run);
                }
            } else {
                current.push(ch);
            }
        }
        push_sentence(&mut sentences, &current);
    }
    sentences
}

fn push_sentence(out: &mut Vec<String>, raw: &str) {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return;
    }
    if crate::text::tokenize(trimmed).len() < MIN_SENTENCE_TOKENS {
        return;
    }
    out.push(String::from(trimmed));
}

/// Sentence similarity graph: symmetric non-negative weights with zero
/// diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceGraph {
    pub sentences: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub damping: f64,
}

impl SentenceGraph {
    pub fn build(sentences: Vec<String>, damping: f64) -> Result<Self, TextRankError> {
        if !(damping > 0.0 && damping < 1.0) {
            return Err(TextRankError::BadDamping(damping));
        }
        let token_sets: Vec<BTreeSet<String>> =
            sentences.iter().map(|s| token_set(s)).collect();
        let n = sentences.len();
        let mut weights = alloc::vec![alloc::vec![0.0f64; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let overlap = token_sets[i].intersection(&token_sets[j]).count() as f64;
                if overlap == 0.0 {
                    continue;
                }
                let denom =
                    (math::ln(token_sets[i].len() as f64) + math::ln(token_sets[j].len() as f64)).max(1e-9);
                let w = overlap / denom;
                weights[i][j] = w;
                weights[j][i] = w;
            }
        }
        Ok(SentenceGraph {
            sentences,
            weights,
            damping,
        })
    }

    /// Damped centrality via power iteration to `tol` (max-norm), capped at
    /// `max_iter` sweeps.
    pub fn centrality(&self, tol: f64, max_iter: usize) -> Vec<f64> {
        let n = self.sentences.len();
        if n == 0 {
            return Vec::new();
        }
        let out_sums: Vec<f64> = self.weights.iter().map(|row| math::pairwise_sum(row)).collect();
        let d = self.damping;
        let mut scores = alloc::vec![1.0f64; n];
        for _ in 0..max_iter {
            let dangling: f64 = {
                let terms: Vec<f64> = (0..n)
                    .filter(|j| out_sums[*j] == 0.0)
                    .map(|j| scores[j])
                    .collect();
                math::pairwise_sum(&terms)
            };
            let mut next = alloc::vec![0.0f64; n];
            let mut delta = 0.0f64;
            for i in 0..n {
                let inflow_terms: Vec<f64> = (0..n)
                    .filter(|j| out_sums[*j] > 0.0 && self.weights[*j][i] > 0.0)
                    .map(|j| self.weights[j][i] / out_sums[j] * scores[j])
                    .collect();
                let inflow = math::pairwise_sum(&inflow_terms) + dangling / n as f64;
                next[i] = (1.0 - d) + d * inflow;
                delta = delta.max(math::abs(next[i] - scores[i]));
            }
            scores = next;
            if delta < tol {
                break;
            }
        }
        scores
    }
}

/// Full extractive baseline: split, rank, take the top n by score (ties to
/// the earlier position), re-order by original position, join with ". ".
pub fn textrank_summary(
    texts: &[&str],
    n_sentences: usize,
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Result<String, TextRankError> {
    if n_sentences == 0 {
        return Err(TextRankError::BadLength);
    }
    let sentences = split_sentences(texts);
    if sentences.is_empty() {
        return Err(TextRankError::EmptySummary);
    }
    let graph = SentenceGraph::build(sentences, damping)?;
    let scores = graph.centrality(tol, max_iter);
    let mut order: Vec<usize> = (0..graph.sentences.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then_with(|| a.cmp(&b))
    });
    let mut selected: Vec<usize> = order.into_iter().take(n_sentences).collect();
    selected.sort_unstable();
    Ok(selected
        .into_iter()
        .map(|i| graph.sentences[i].as_str())
        .collect::<Vec<_>>()
        .join(". "))
}
