use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenization::TokenSetIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    /// Smoothing added to token counts in the rarity score; must be positive.
    pub alpha: f64,
    /// Samples admitted per scoring round.
    pub batch: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            batch: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Coverage,
    Score,
}

/// Samples admitted by one iteration of the sampling loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Admission {
    pub phase: Phase,
    pub samples: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    /// Selected samples in admission order.
    pub selected: Vec<u32>,
    pub trace: Vec<Admission>,
    /// Times each token is covered by the selection; indexed by token, zero
    /// outside the candidate set.
    pub counts: Vec<u32>,
}

impl SampleOutcome {
    /// Number of candidate tokens covered at least once.
    pub fn covered(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Selects up to `n` samples from `pool`, considering only `candidates`.
///
/// While some candidate token is uncovered, the sample covering the most
/// uncovered tokens is admitted, one per iteration. Once every candidate is
/// covered, remaining samples are scored by `sum over its tokens of
/// 1 / (count + alpha)` and the best `min(batch, n - selected)` are admitted
/// together. Ties go to the smallest sample index; counts are updated after
/// every admission.
pub fn token_aware_sample(
    index: &TokenSetIndex,
    pool: &[u32],
    candidates: &[u32],
    n: usize,
    params: SamplingParams,
) -> Result<SampleOutcome> {
    if n == 0 {
        return Err(Error::precondition("target size must be at least 1"));
    }
    if !(params.alpha > 0.0 && params.alpha.is_finite()) {
        return Err(Error::precondition(format!("alpha must be positive, got {}", params.alpha)));
    }
    if params.batch == 0 {
        return Err(Error::precondition("batch size must be at least 1"));
    }

    let mut pool: Vec<u32> = pool.to_vec();
    pool.sort_unstable();
    pool.dedup();
    if n > pool.len() {
        warn!("target size {n} exceeds the pool of {} samples; taking all", pool.len());
    }

    let mut is_candidate = vec![false; index.token_count()];
    for &t in candidates {
        is_candidate[t as usize] = true;
    }
    let mut uncovered = is_candidate.iter().filter(|&&c| c).count();
    let restricted: Vec<Vec<u32>> = pool
        .iter()
        .map(|&d| index.set(d).iter().copied().filter(|&t| is_candidate[t as usize]).collect())
        .collect();

    let mut counts = vec![0u32; index.token_count()];
    let mut taken = vec![false; pool.len()];
    let mut selected = Vec::with_capacity(n.min(pool.len()));
    let mut trace = Vec::new();

    let admit = |slot: usize,
                     counts: &mut Vec<u32>,
                     uncovered: &mut usize,
                     taken: &mut Vec<bool>,
                     selected: &mut Vec<u32>| {
        taken[slot] = true;
        selected.push(pool[slot]);
        for &t in &restricted[slot] {
            if counts[t as usize] == 0 {
                *uncovered -= 1;
            }
            counts[t as usize] += 1;
        }
    };

    // Coverage phase. Gains only shrink, so stale heap entries are upper
    // bounds: an entry whose recomputed gain matches its key is the true
    // argmax, and equal keys pop in ascending slot order.
    let gain = |slot: usize, counts: &[u32]| {
        restricted[slot].iter().filter(|&&t| counts[t as usize] == 0).count()
    };
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> =
        (0..pool.len()).map(|s| (restricted[s].len(), Reverse(s))).collect();
    while uncovered > 0 && selected.len() < n {
        let Some((key, Reverse(slot))) = heap.pop() else {
            break;
        };
        let fresh = gain(slot, &counts);
        if fresh != key {
            heap.push((fresh, Reverse(slot)));
            continue;
        }
        admit(slot, &mut counts, &mut uncovered, &mut taken, &mut selected);
        trace.push(Admission {
            phase: Phase::Coverage,
            samples: vec![pool[slot]],
        });
    }

    // Score phase.
    let mut remaining: Vec<usize> = (0..pool.len()).filter(|&s| !taken[s]).collect();
    while selected.len() < n && !remaining.is_empty() {
        let alpha = params.alpha;
        let mut scored: Vec<(f64, usize)> = remaining
            .par_iter()
            .map(|&slot| {
                let s: f64 = restricted[slot]
                    .iter()
                    .map(|&t| 1.0 / (counts[t as usize] as f64 + alpha))
                    .sum();
                (s, slot)
            })
            .collect();
        let k = params.batch.min(n - selected.len()).min(scored.len());
        let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        let batch: Vec<u32> = scored.iter().map(|&(_, slot)| pool[slot]).collect();
        for &(_, slot) in &scored {
            admit(slot, &mut counts, &mut uncovered, &mut taken, &mut selected);
        }
        trace.push(Admission {
            phase: Phase::Score,
            samples: batch,
        });
        remaining.retain(|&s| !taken[s]);
    }

    Ok(SampleOutcome {
        selected,
        trace,
        counts,
    })
}

/// Greedily admits the sample adding the fewest new important tokens (ties
/// to the smallest index) until `n` samples are chosen. Anchors the low end
/// of a microscopic series.
pub fn min_coverage_select(index: &TokenSetIndex, pool: &[u32], n: usize) -> Vec<u32> {
    let mut in_pool = vec![false; index.len()];
    for &d in pool {
        in_pool[d as usize] = true;
    }
    let mut fresh: Vec<u32> = (0..index.len() as u32).map(|d| index.set(d).len() as u32).collect();
    let mut queue: BTreeSet<(u32, u32)> = (0..index.len() as u32)
        .filter(|&d| in_pool[d as usize])
        .map(|d| (fresh[d as usize], d))
        .collect();
    let mut covered = vec![false; index.token_count()];
    let mut chosen = Vec::with_capacity(n);
    while chosen.len() < n {
        let Some((_, d)) = queue.pop_first() else {
            break;
        };
        chosen.push(d);
        for &t in index.set(d) {
            if std::mem::replace(&mut covered[t as usize], true) {
                continue;
            }
            for &h in index.holders(t) {
                let key = (fresh[h as usize], h);
                if queue.remove(&key) {
                    fresh[h as usize] -= 1;
                    queue.insert((fresh[h as usize], h));
                }
            }
        }
    }
    chosen
}
