use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Tokenized;
use crate::error::{Error, Result};
use crate::rng;
use crate::tokenization::TokenizerHandle;

const STREAM: &str = "self-bleu-references";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuParams {
    pub max_n: usize,
    /// Above this many texts each hypothesis is scored against a seeded
    /// sample of this many references instead of all others.
    pub sample_limit: usize,
    pub seed: u64,
    pub epsilon: f64,
}

impl Default for BleuParams {
    fn default() -> Self {
        Self {
            max_n: 4,
            sample_limit: 2000,
            seed: 0,
            epsilon: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuResult {
    pub score: f64,
    pub sampled: bool,
    pub references_per_hypothesis: usize,
}

/// Mean BLEU of each text against all other texts as references.
///
/// BLEU here is the brevity penalty (closest reference length, shorter on
/// ties) times the geometric mean of clipped n-gram precisions for
/// `n = 1..=max_n`, each smoothed as `(matches + eps) / (total + eps)`. An
/// empty hypothesis scores 0.
///
/// With more than `sample_limit` texts, each hypothesis gets its own seeded
/// sample of references, keyed by the hypothesis's rank in content order so
/// the result does not depend on input order.
pub fn self_bleu(texts: &[&str], tok: &TokenizerHandle, params: &BleuParams) -> Result<BleuResult> {
    self_bleu_of(texts, &Tokenized::new(texts, tok), params)
}

/// Distinct n-grams of one text as `(gram id, count)`.
type GramCounts = Vec<(u32, u32)>;

pub(crate) fn self_bleu_of(texts: &[&str], t: &Tokenized, params: &BleuParams) -> Result<BleuResult> {
    let n = t.texts.len();
    if n < 2 {
        return Err(Error::precondition(format!("self-BLEU needs at least 2 texts, got {n}")));
    }
    if params.max_n == 0 || params.sample_limit == 0 {
        return Err(Error::precondition("self-BLEU max_n and sample_limit must be positive"));
    }
    if params.epsilon.is_nan() || params.epsilon <= 0.0 {
        return Err(Error::precondition("self-BLEU smoothing epsilon must be positive"));
    }

    // grams[order][text]
    let mut grams: Vec<Vec<GramCounts>> = Vec::with_capacity(params.max_n);
    let mut vocab_sizes = Vec::with_capacity(params.max_n);
    for order in 1..=params.max_n {
        let mut ids: HashMap<&[u32], u32> = HashMap::new();
        let per_text: Vec<GramCounts> = t
            .texts
            .iter()
            .map(|text| {
                let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
                for g in text.windows(order) {
                    let next = ids.len() as u32;
                    let id = *ids.entry(g).or_insert(next);
                    *counts.entry(id).or_default() += 1;
                }
                counts.into_iter().collect()
            })
            .collect();
        vocab_sizes.push(ids.len());
        grams.push(per_text);
    }
    let lengths: Vec<usize> = t.texts.iter().map(Vec::len).collect();

    let mut canonical: Vec<usize> = (0..n).collect();
    canonical.sort_by(|&a, &b| texts[a].cmp(texts[b]));

    let sampled = n - 1 > params.sample_limit;
    let scores: Vec<f64> = if sampled {
        let limit = params.sample_limit;
        (0..n)
            .into_par_iter()
            .map_init(
                || vocab_sizes.iter().map(|&v| vec![u32::MAX; v]).collect::<Vec<_>>(),
                |scratch, rank| {
                    let hyp = canonical[rank];
                    let mut stream = rng::stream(params.seed, STREAM, &(rank as u64).to_le_bytes());
                    let refs: Vec<usize> = rng::sample_indices(&mut stream, n - 1, limit)
                        .into_iter()
                        .map(|r| canonical[if r >= rank { r + 1 } else { r }])
                        .collect();
                    let mut matches = Vec::with_capacity(params.max_n);
                    for (o, per_text) in grams.iter().enumerate() {
                        let best = &mut scratch[o];
                        for &(g, _) in &per_text[hyp] {
                            best[g as usize] = 0;
                        }
                        for &r in &refs {
                            for &(g, c) in &per_text[r] {
                                let slot = &mut best[g as usize];
                                if *slot != u32::MAX && c > *slot {
                                    *slot = c;
                                }
                            }
                        }
                        let mut m = 0u64;
                        for &(g, c) in &per_text[hyp] {
                            m += c.min(best[g as usize]) as u64;
                            best[g as usize] = u32::MAX;
                        }
                        matches.push(m);
                    }
                    let closest = closest_length(lengths[hyp], refs.iter().map(|&r| lengths[r]));
                    sentence_score(lengths[hyp], closest, &matches, params)
                },
            )
            .collect::<Vec<_>>()
            .into_iter()
            .enumerate()
            .fold(vec![0.0; n], |mut acc, (rank, s)| {
                acc[canonical[rank]] = s;
                acc
            })
    } else {
        // Largest and second-largest count of each gram over distinct texts.
        let tops: Vec<Vec<(u32, usize, u32)>> = grams
            .iter()
            .zip(&vocab_sizes)
            .map(|(per_text, &v)| {
                let mut top = vec![(0u32, usize::MAX, 0u32); v];
                for (text, list) in per_text.iter().enumerate() {
                    for &(g, c) in list {
                        let e = &mut top[g as usize];
                        if c > e.0 {
                            *e = (c, text, e.0);
                        } else if c > e.2 {
                            e.2 = c;
                        }
                    }
                }
                top
            })
            .collect();
        let mut by_length: BTreeMap<usize, usize> = BTreeMap::new();
        for &l in &lengths {
            *by_length.entry(l).or_default() += 1;
        }
        (0..n)
            .into_par_iter()
            .map(|hyp| {
                let matches: Vec<u64> = grams
                    .iter()
                    .zip(&tops)
                    .map(|(per_text, top)| {
                        per_text[hyp]
                            .iter()
                            .map(|&(g, c)| {
                                let (c1, owner, c2) = top[g as usize];
                                c.min(if owner == hyp { c2 } else { c1 }) as u64
                            })
                            .sum()
                    })
                    .collect();
                let l = lengths[hyp];
                let closest = if by_length[&l] > 1 {
                    l
                } else {
                    let below = by_length.range(..l).next_back().map(|(&k, _)| k);
                    let above = by_length.range(l + 1..).next().map(|(&k, _)| k);
                    closest_length(l, below.into_iter().chain(above))
                };
                sentence_score(l, closest, &matches, params)
            })
            .collect()
    };

    let total: f64 = canonical.iter().map(|&i| scores[i]).sum();
    Ok(BleuResult {
        score: total / n as f64,
        sampled,
        references_per_hypothesis: if sampled { params.sample_limit } else { n - 1 },
    })
}

/// Reference length closest to `hyp`, shorter on ties.
fn closest_length(hyp: usize, refs: impl Iterator<Item = usize>) -> usize {
    refs.min_by_key(|&r| (r.abs_diff(hyp), r)).unwrap_or(0)
}

fn sentence_score(len: usize, reference: usize, matches: &[u64], params: &BleuParams) -> f64 {
    if len == 0 {
        return 0.0;
    }
    let eps = params.epsilon;
    let log_mean = matches
        .iter()
        .enumerate()
        .map(|(o, &m)| {
            let total = len.saturating_sub(o) as f64;
            ((m as f64 + eps) / (total + eps)).ln()
        })
        .sum::<f64>()
        / params.max_n as f64;
    let penalty = if len > reference {
        1.0
    } else {
        (1.0 - reference as f64 / len as f64).exp()
    };
    penalty * log_mean.exp()
}
