use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::prune::Pruner;
use super::sample::{min_coverage_select, token_aware_sample, SamplingParams};
use crate::corpus::manifest_support::{linear_targets, percent};
use crate::corpus::{Component, Corpus, SeriesManifest, SeriesPoint, Strategy};
use crate::error::{Error, Result};
use crate::tokenization::{
    build_token_set_index, BandThresholds, FrequencyTable, TokenSetIndex, TokenizerHandle,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MicroSeriesParams {
    pub size: usize,
    pub points: usize,
    pub sampling: SamplingParams,
    pub seed: u64,
    pub thresholds: BandThresholds,
    /// Also count important tokens of each point with bands recomputed on the
    /// point itself.
    pub per_subset_bands: bool,
}

impl MicroSeriesParams {
    pub fn new(size: usize, points: usize, seed: u64) -> Self {
        Self {
            size,
            points,
            sampling: SamplingParams::default(),
            seed,
            thresholds: BandThresholds::default(),
            per_subset_bands: false,
        }
    }
}

/// Builds a series of `points` datasets of `size` samples each, ordered by the
/// number of distinct important tokens they contain.
///
/// The low anchor is the fewest-new-tokens greedy selection; the high anchor
/// is token-aware sampling over the whole corpus. Interior points target
/// token counts spaced linearly between the two anchors: the corpus is pruned
/// until at most the target number of tokens survive, then token-aware
/// sampling picks the point from the survivors. A target that would leave
/// fewer than `size` survivors is raised to the smallest feasible count.
pub fn build_micro_series(
    corpus: &Corpus,
    component: Component,
    tokenizer: &TokenizerHandle,
    params: &MicroSeriesParams,
) -> Result<SeriesManifest> {
    let n = params.size;
    if params.points < 2 {
        return Err(Error::precondition("a series needs at least 2 points"));
    }
    if n == 0 || n > corpus.len() {
        return Err(Error::Insufficient {
            needed: n,
            available: corpus.len(),
        });
    }
    let texts: Vec<&str> = corpus.samples().iter().map(|s| s.text(component)).collect();
    let table = FrequencyTable::from_texts(&texts, component, tokenizer, params.thresholds);
    let index = build_token_set_index(corpus, component, &table, tokenizer)?;
    let all_samples: Vec<u32> = (0..index.len() as u32).collect();
    let all_tokens: Vec<u32> = (0..index.token_count() as u32).collect();

    let high = token_aware_sample(&index, &all_samples, &all_tokens, n, params.sampling)?;
    let k_max = high.covered();
    let low = min_coverage_select(&index, &all_samples, n);
    let k_min = index.covered(&low);
    if k_max <= k_min {
        return Err(Error::DegenerateSeries(format!(
            "important-token range is empty (low anchor {k_min}, high anchor {k_max})"
        )));
    }

    let targets = linear_targets(k_min, k_max, params.points);
    let trajectory = Trajectory::record(&index, n);

    let mut selections = Vec::with_capacity(params.points);
    let mut effective = Vec::with_capacity(params.points);
    selections.push(low);
    effective.push(k_min);
    for &target in &targets[1..params.points - 1] {
        let (survivors, covered, reached) = trajectory.state_for(&index, target);
        let out = token_aware_sample(&index, &survivors, &covered, n, params.sampling)?;
        selections.push(out.selected);
        effective.push(reached);
    }
    selections.push(high.selected);
    effective.push(k_max);

    let mut points = Vec::with_capacity(params.points);
    let mut achieved = Vec::with_capacity(params.points);
    let mut subset_mid = Vec::new();
    for selection in &selections {
        let got = index.covered(selection);
        achieved.push(got);
        let mut ids = index.ids_of(selection);
        ids.sort_unstable();
        if params.per_subset_bands {
            let texts = corpus.texts(&ids, component)?;
            let local = FrequencyTable::from_texts(&texts, component, tokenizer, params.thresholds);
            subset_mid.push(local.band_sizes().1);
        }
        points.push(SeriesPoint {
            diversity_value: got as u64,
            diversity_percent: percent(got as f64, k_min as f64, k_max as f64),
            sample_ids: ids,
        });
    }

    let relaxed: Vec<bool> = targets.iter().zip(&effective).map(|(t, e)| e > t).collect();
    let mut parameters: BTreeMap<String, Value> = BTreeMap::new();
    parameters.insert("alpha".into(), json!(params.sampling.alpha));
    parameters.insert("batch".into(), json!(params.sampling.batch));
    parameters.insert("band_low_max".into(), json!(params.thresholds.low_max));
    parameters.insert("band_high_min".into(), json!(params.thresholds.high_min));
    parameters.insert("tokenizer_kind".into(), json!(tokenizer.kind()));
    parameters.insert("tokenizer_fingerprint".into(), json!(tokenizer.fingerprint()));
    parameters.insert("band_scope".into(), json!("corpus"));
    parameters.insert("important_token_types".into(), json!(index.token_count()));
    parameters.insert(
        "mean_important_tokens_per_sample".into(),
        json!(index.mean_set_size()),
    );
    parameters.insert("k_min".into(), json!(k_min));
    parameters.insert("k_max".into(), json!(k_max));
    parameters.insert(
        "k_min_rule".into(),
        json!("greedy selection admitting the sample with the fewest new important tokens"),
    );
    parameters.insert(
        "k_max_rule".into(),
        json!("token-aware sampling over the whole corpus"),
    );
    parameters.insert("target_schedule".into(), json!("linear"));
    parameters.insert("targets".into(), json!(targets));
    parameters.insert("effective_targets".into(), json!(effective));
    parameters.insert("relaxed".into(), json!(relaxed));
    parameters.insert("achieved".into(), json!(achieved));
    parameters.insert(
        "seed_usage".into(),
        json!("recorded only: selection is deterministic with smallest-id tie breaking"),
    );
    if params.per_subset_bands {
        parameters.insert("per_subset_mid_tokens".into(), json!(subset_mid));
    }

    Ok(SeriesManifest {
        strategy: Strategy::Micro,
        component,
        size: n,
        points,
        seed: params.seed,
        parameters,
    })
}

/// One full pruning run, recorded so any target can be served from it: the
/// removal order does not depend on the target, only the stopping point does.
struct Trajectory {
    removed: Vec<u32>,
    /// Token union size after `i` removals.
    covered_after: Vec<usize>,
}

impl Trajectory {
    /// Prunes until only `floor` samples survive.
    fn record(index: &TokenSetIndex, floor: usize) -> Self {
        let mut pruner = Pruner::new(index);
        let mut covered_after = vec![pruner.covered_len()];
        while pruner.survivors_len() > floor && pruner.covered_len() > 0 {
            pruner.step();
            covered_after.push(pruner.covered_len());
        }
        Self {
            removed: pruner.removed().to_vec(),
            covered_after,
        }
    }

    /// Survivors, covered tokens and covered count at the first state whose
    /// union is at most `target`, or at the last feasible state.
    fn state_for(&self, index: &TokenSetIndex, target: usize) -> (Vec<u32>, Vec<u32>, usize) {
        let steps = self
            .covered_after
            .iter()
            .position(|&c| c <= target)
            .unwrap_or(self.covered_after.len() - 1);
        let mut alive = vec![true; index.len()];
        for &d in &self.removed[..steps] {
            alive[d as usize] = false;
        }
        let survivors: Vec<u32> = (0..index.len() as u32).filter(|&d| alive[d as usize]).collect();
        let mut covered = vec![false; index.token_count()];
        for &d in &survivors {
            for &t in index.set(d) {
                covered[t as usize] = true;
            }
        }
        let tokens: Vec<u32> = (0..index.token_count() as u32).filter(|&t| covered[t as usize]).collect();
        (survivors, tokens, self.covered_after[steps])
    }
}
