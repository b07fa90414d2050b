//! Posterior diversity metrics over a dataset of texts, distribution
//! statistics of its tokens, and correlation of metrics with scores.

mod bleu;
mod report;
mod stats;

use std::collections::{HashMap, HashSet};
use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;
use rayon::prelude::*;

use crate::clustering::{distance, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::tokenization::TokenizerHandle;

pub use bleu::{self_bleu, BleuParams, BleuResult};
pub use report::{
    compute_metrics, correlate, ComponentMetrics, CorrelationReport, Metric, MetricOptions, MetricReport,
    MetricValues, ReportSettings, ScoredReport, StrategySlope,
};
pub use stats::{ols_slope, pearson};

/// Deflate level used by [`compression_ratio`].
pub const DEFLATE_LEVEL: u32 = 6;
/// Codec description recorded next to compression ratios.
pub const DEFLATE_CODEC: &str = "raw deflate, level 6, miniz_oxide backend";

/// Texts as interned token ids.
pub(crate) struct Tokenized {
    pub texts: Vec<Vec<u32>>,
    pub vocabulary: usize,
}

impl Tokenized {
    pub(crate) fn new(texts: &[&str], tok: &TokenizerHandle) -> Self {
        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut out = Vec::with_capacity(texts.len());
        for text in texts {
            let mut ids = Vec::new();
            tok.for_each_token(text, |t| {
                let next = vocab.len() as u32;
                ids.push(match vocab.get(t) {
                    Some(&id) => id,
                    None => {
                        vocab.insert(t.to_string(), next);
                        next
                    }
                });
            });
            out.push(ids);
        }
        Self {
            texts: out,
            vocabulary: vocab.len(),
        }
    }

    /// Occurrence count of every token seen.
    pub(crate) fn counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.vocabulary];
        for t in self.texts.iter().flatten() {
            counts[*t as usize] += 1;
        }
        counts
    }
}

/// Unique `n`-grams over total `n`-grams, pooled over all texts. N-grams
/// never span two texts.
pub fn ngram_ratio(texts: &[&str], tok: &TokenizerHandle, n: usize) -> Result<f64> {
    ngram_ratio_of(&Tokenized::new(texts, tok), n)
}

pub(crate) fn ngram_ratio_of(t: &Tokenized, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::precondition("n-gram order must be at least 1"));
    }
    let mut unique: HashSet<&[u32]> = HashSet::new();
    let mut total = 0usize;
    for text in &t.texts {
        for g in text.windows(n) {
            unique.insert(g);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::precondition(format!("no text has at least {n} tokens")));
    }
    Ok(unique.len() as f64 / total as f64)
}

/// Mean Euclidean distance over all unordered pairs of rows.
pub fn embedding_distance(e: &EmbeddingMatrix) -> Result<f64> {
    let n = e.len();
    Ok(pair_distance_sum(e)? / (n * (n - 1) / 2) as f64)
}

/// Sum over ordered pairs `a != b` divided by the number of rows: the
/// alternative normalization reported next to [`embedding_distance`].
pub fn embedding_distance_literal(e: &EmbeddingMatrix) -> Result<f64> {
    Ok(2.0 * pair_distance_sum(e)? / e.len() as f64)
}

fn pair_distance_sum(e: &EmbeddingMatrix) -> Result<f64> {
    let n = e.len();
    if n < 2 {
        return Err(Error::precondition(format!("embedding distance needs at least 2 rows, got {n}")));
    }
    let per_row: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|a| (a + 1..n).map(|b| distance(e.row(a), e.row(b))).sum())
        .collect();
    Ok(per_row.iter().sum())
}

/// Mean token count per text.
pub fn mean_sequence_length(texts: &[&str], tok: &TokenizerHandle) -> Result<f64> {
    if texts.is_empty() {
        return Err(Error::precondition("mean sequence length of an empty dataset"));
    }
    let total: usize = texts.par_iter().map(|t| tok.count_tokens(t)).sum();
    Ok(total as f64 / texts.len() as f64)
}

/// Bytes of the newline-joined texts over bytes after deflate at
/// [`DEFLATE_LEVEL`]. Texts are joined in sorted order so the ratio does not
/// depend on dataset order.
pub fn compression_ratio(texts: &[&str]) -> Result<f64> {
    let mut sorted = texts.to_vec();
    sorted.sort_unstable();
    let joined = sorted.join("\n");
    if joined.is_empty() {
        return Err(Error::precondition("compression ratio of empty text"));
    }
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::new(DEFLATE_LEVEL));
    enc.write_all(joined.as_bytes()).expect("in-memory write");
    let packed = enc.finish().expect("in-memory write");
    Ok(joined.len() as f64 / packed.len() as f64)
}

fn probabilities(counts: &[u64]) -> Result<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::precondition("dataset has no tokens"));
    }
    Ok(counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / total as f64).collect())
}

/// Shannon entropy, natural log, of the token frequency distribution.
pub fn information_entropy(texts: &[&str], tok: &TokenizerHandle) -> Result<f64> {
    entropy_of_counts(&Tokenized::new(texts, tok).counts())
}

pub fn entropy_of_counts(counts: &[u64]) -> Result<f64> {
    Ok(-probabilities(counts)?.iter().map(|p| p * p.ln()).sum::<f64>())
}

/// `1 - sum p_i^2` over token frequencies.
pub fn gini_index(texts: &[&str], tok: &TokenizerHandle) -> Result<f64> {
    gini_of_counts(&Tokenized::new(texts, tok).counts())
}

pub fn gini_of_counts(counts: &[u64]) -> Result<f64> {
    Ok(1.0 - probabilities(counts)?.iter().map(|p| p * p).sum::<f64>())
}

/// Excess kurtosis (population moments) of the per-token occurrence counts.
pub fn distribution_kurtosis(texts: &[&str], tok: &TokenizerHandle) -> Result<f64> {
    kurtosis_of_counts(&Tokenized::new(texts, tok).counts())
}

pub fn kurtosis_of_counts(counts: &[u64]) -> Result<f64> {
    let xs: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| c as f64).collect();
    let n = xs.len() as f64;
    if xs.is_empty() {
        return Err(Error::precondition("dataset has no tokens"));
    }
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    if m2 == 0.0 {
        return Err(Error::precondition("kurtosis is undefined when every token count is equal"));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws() -> TokenizerHandle {
        TokenizerHandle::whitespace()
    }

    #[test]
    fn ngram_examples() {
        assert_eq!(ngram_ratio(&["a b c d"], &ws(), 1).unwrap(), 1.0);
        assert_eq!(ngram_ratio(&["a a a a"], &ws(), 1).unwrap(), 0.25);
        assert_eq!(ngram_ratio(&["a b", "b c"], &ws(), 2).unwrap(), 1.0);
        assert!(ngram_ratio(&["a"], &ws(), 2).is_err());
        let once = ngram_ratio(&["x y z", "x q"], &ws(), 2).unwrap();
        let twice = ngram_ratio(&["x y z", "x q", "x y z", "x q"], &ws(), 2).unwrap();
        assert_eq!(twice, once / 2.0);
    }

    #[test]
    fn distance_examples() {
        let e = EmbeddingMatrix::new(vec!["a".into(), "b".into()], vec![vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(embedding_distance(&e).unwrap(), 5.0);
        assert_eq!(embedding_distance_literal(&e).unwrap(), 5.0);
        let same = EmbeddingMatrix::new(vec!["a".into(), "b".into()], vec![vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(embedding_distance(&same).unwrap(), 0.0);
    }

    #[test]
    fn length_and_compression() {
        assert_eq!(mean_sequence_length(&["a b", "a b c d"], &ws()).unwrap(), 3.0);
        let rep = "a".repeat(10_000);
        assert!(compression_ratio(&[&rep]).unwrap() >= 100.0);
        assert!(compression_ratio(&[]).is_err());
    }

    #[test]
    fn distribution_examples() {
        assert!((entropy_of_counts(&[5, 5, 5, 5]).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(entropy_of_counts(&[9]).unwrap(), 0.0);
        assert!((gini_of_counts(&[2, 2, 2, 2]).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(gini_of_counts(&[3]).unwrap(), 0.0);
        assert!((kurtosis_of_counts(&[1, 2, 2, 3]).unwrap() + 1.0).abs() < 1e-12);
        assert!(kurtosis_of_counts(&[4, 4, 4]).is_err());
        assert!(kurtosis_of_counts(&[1, 1, 1, 1, 100]).unwrap() > 0.0);
    }
}
