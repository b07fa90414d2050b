//! Per-sample sets of important (mid-band) tokens and their transpose.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use super::{FrequencyTable, TokenizerHandle};
use crate::corpus::{Component, Corpus};
use crate::error::{Error, Result};

/// Forward and inverted index between samples and the important tokens they
/// contain.
///
/// Samples are stored sorted by id, so a smaller dense index always means a
/// smaller sample id. Tokens are sorted by surface form. Forward sets and
/// posting lists are sorted ascending.
#[derive(Debug, Clone)]
pub struct TokenSetIndex {
    sample_ids: Vec<String>,
    tokens: Vec<String>,
    sets: Vec<Vec<u32>>,
    inverted: Vec<Vec<u32>>,
    tokenizer_fingerprint: String,
    component: Option<Component>,
}

/// Indexes the mid-band tokens of `component` for every corpus sample.
pub fn build_token_set_index(
    corpus: &Corpus,
    component: Component,
    table: &FrequencyTable,
    tokenizer: &TokenizerHandle,
) -> Result<TokenSetIndex> {
    if table.tokenizer_fingerprint() != tokenizer.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: table.tokenizer_fingerprint().to_string(),
            found: tokenizer.fingerprint().to_string(),
        });
    }
    if table.component() != component {
        return Err(Error::precondition(format!(
            "frequency table counts the {} component, index requested for {component}",
            table.component()
        )));
    }
    let mut order: Vec<&crate::corpus::Sample> = corpus.samples().iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));

    let per_sample: Vec<BTreeSet<String>> = order
        .par_iter()
        .map(|s| {
            let mut set = BTreeSet::new();
            tokenizer.for_each_token(s.text(component), |t| {
                if table.is_mid(t) && !set.contains(t) {
                    set.insert(t.to_string());
                }
            });
            set
        })
        .collect();

    let mut index = TokenSetIndex::from_string_sets(
        order.iter().map(|s| s.id.clone()).zip(per_sample).collect(),
    );
    index.tokenizer_fingerprint = tokenizer.fingerprint().to_string();
    index.component = Some(component);
    Ok(index)
}

impl TokenSetIndex {
    /// Builds an index from explicit `(sample id, token set)` pairs.
    pub fn from_sets<I, S, T>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: IntoIterator,
        T::Item: Into<String>,
    {
        Self::from_string_sets(
            entries
                .into_iter()
                .map(|(id, set)| (id.into(), set.into_iter().map(Into::into).collect()))
                .collect(),
        )
    }

    fn from_string_sets(mut entries: Vec<(String, BTreeSet<String>)>) -> Self {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let vocab: BTreeSet<&str> = entries
            .iter()
            .flat_map(|(_, set)| set.iter().map(String::as_str))
            .collect();
        let tokens: Vec<String> = vocab.into_iter().map(str::to_string).collect();
        let ids: HashMap<&str, u32> =
            tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect();

        let sets: Vec<Vec<u32>> = entries
            .iter()
            .map(|(_, set)| {
                let mut v: Vec<u32> = set.iter().map(|t| ids[t.as_str()]).collect();
                v.sort_unstable();
                v
            })
            .collect();
        let mut inverted = vec![Vec::new(); tokens.len()];
        for (d, set) in sets.iter().enumerate() {
            for &t in set {
                inverted[t as usize].push(d as u32);
            }
        }
        Self {
            sample_ids: entries.into_iter().map(|(id, _)| id).collect(),
            tokens,
            sets,
            inverted,
            tokenizer_fingerprint: String::new(),
            component: None,
        }
    }

    /// Number of indexed samples.
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn sample_id(&self, sample: u32) -> &str {
        &self.sample_ids[sample as usize]
    }

    pub fn sample_index(&self, id: &str) -> Option<u32> {
        self.sample_ids
            .binary_search_by(|probe| probe.as_str().cmp(id))
            .ok()
            .map(|i| i as u32)
    }

    pub fn token(&self, token: u32) -> &str {
        &self.tokens[token as usize]
    }

    pub fn token_index(&self, token: &str) -> Option<u32> {
        self.tokens
            .binary_search_by(|probe| probe.as_str().cmp(token))
            .ok()
            .map(|i| i as u32)
    }

    /// Important tokens of one sample.
    pub fn set(&self, sample: u32) -> &[u32] {
        &self.sets[sample as usize]
    }

    /// Samples containing one important token.
    pub fn holders(&self, token: u32) -> &[u32] {
        &self.inverted[token as usize]
    }

    pub fn tokenizer_fingerprint(&self) -> &str {
        &self.tokenizer_fingerprint
    }

    pub fn component(&self) -> Option<Component> {
        self.component
    }

    /// Total number of (sample, token) incidences.
    pub fn incidences(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    /// Mean number of important tokens per sample.
    pub fn mean_set_size(&self) -> f64 {
        if self.sets.is_empty() {
            0.0
        } else {
            self.incidences() as f64 / self.sets.len() as f64
        }
    }

    /// Number of distinct important tokens covered by `samples`.
    pub fn covered(&self, samples: &[u32]) -> usize {
        let mut seen = vec![false; self.tokens.len()];
        let mut n = 0;
        for &d in samples {
            for &t in self.set(d) {
                if !std::mem::replace(&mut seen[t as usize], true) {
                    n += 1;
                }
            }
        }
        n
    }

    /// Maps dense sample indices back to ids.
    pub fn ids_of(&self, samples: &[u32]) -> Vec<String> {
        samples.iter().map(|&d| self.sample_id(d).to_string()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sample;

    #[test]
    fn from_sets_transposes() {
        let idx = TokenSetIndex::from_sets([("d2", vec!["y", "z"]), ("d1", vec!["x", "y"])]);
        assert_eq!(idx.sample_id(0), "d1");
        let y = idx.token_index("y").unwrap();
        assert_eq!(idx.holders(y), [0, 1]);
        assert_eq!(idx.covered(&[0, 1]), 3);
        assert_eq!(idx.sample_index("d2"), Some(1));
        assert!((idx.mean_set_size() - 2.0).abs() < 1e-12);
    }

    fn corpus() -> Corpus {
        // "common" in every sample (high with low thresholds), "shared" in two.
        let texts = ["common shared a", "common shared b", "common c"];
        Corpus::from_samples(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Sample {
                    id: format!("s{i}"),
                    instruction: String::new(),
                    response: t.to_string(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn only_mid_tokens_are_indexed() {
        let c = corpus();
        let tok = TokenizerHandle::whitespace();
        let ft = crate::tokenization::build_frequency_table(&c, Component::Response, &tok)
            .with_thresholds(crate::tokenization::BandThresholds::new(2, 2).unwrap());
        let idx = build_token_set_index(&c, Component::Response, &ft, &tok).unwrap();
        assert_eq!(idx.token_count(), 1);
        let shared = idx.token_index("shared").unwrap();
        assert_eq!(idx.ids_of(idx.holders(shared)), ["s0", "s1"]);
        assert!(idx.set(idx.sample_index("s2").unwrap()).is_empty());
    }

    #[test]
    fn mismatched_tokenizer_is_rejected() {
        let c = corpus();
        let ft = crate::tokenization::build_frequency_table(
            &c,
            Component::Response,
            &TokenizerHandle::whitespace(),
        );
        let other = TokenizerHandle::from_bpe_bytes(br#"{"vocab":{"a":0},"merges":[]}"#).unwrap();
        assert!(matches!(
            build_token_set_index(&c, Component::Response, &ft, &other),
            Err(Error::FingerprintMismatch { .. })
        ));
        assert!(matches!(
            build_token_set_index(&c, Component::Instruction, &ft, &TokenizerHandle::whitespace()),
            Err(Error::Precondition(_))
        ));
    }
}
