//! Corpus-wide token counts and frequency bands.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TokenizerHandle;
use crate::corpus::{Component, Corpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    High,
    Mid,
    Low,
}

impl Band {
    pub fn as_str(self) -> &'static str {
        match self {
            Band::High => "high",
            Band::Mid => "mid",
            Band::Low => "low",
        }
    }
}

/// Band boundaries: `low` below `low_max`, `high` above `high_min`, `mid`
/// in between (both ends inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandThresholds {
    pub low_max: u64,
    pub high_min: u64,
}

impl Default for BandThresholds {
    fn default() -> Self {
        Self {
            low_max: 10,
            high_min: 500,
        }
    }
}

impl BandThresholds {
    pub fn new(low_max: u64, high_min: u64) -> Result<Self> {
        if low_max > high_min {
            return Err(Error::precondition(format!(
                "band thresholds out of order: low_max {low_max} > high_min {high_min}"
            )));
        }
        Ok(Self { low_max, high_min })
    }

    pub fn band(&self, count: u64) -> Band {
        if count > self.high_min {
            Band::High
        } else if count < self.low_max {
            Band::Low
        } else {
            Band::Mid
        }
    }
}

/// Token occurrence counts over one component of a corpus.
#[derive(Debug, Clone)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
    thresholds: BandThresholds,
    component: Component,
    tokenizer_fingerprint: String,
    total_tokens: u64,
    documents: usize,
}

/// Counts tokens of `component` over the whole corpus with the default bands.
pub fn build_frequency_table(
    corpus: &Corpus,
    component: Component,
    tokenizer: &TokenizerHandle,
) -> FrequencyTable {
    let texts: Vec<&str> = corpus.samples().iter().map(|s| s.text(component)).collect();
    FrequencyTable::from_texts(&texts, component, tokenizer, BandThresholds::default())
}

impl FrequencyTable {
    pub fn from_texts(
        texts: &[&str],
        component: Component,
        tokenizer: &TokenizerHandle,
        thresholds: BandThresholds,
    ) -> Self {
        let counts = texts
            .par_iter()
            .fold(HashMap::new, |mut acc: HashMap<String, u64>, text| {
                tokenizer.for_each_token(text, |t| match acc.get_mut(t) {
                    Some(c) => *c += 1,
                    None => {
                        acc.insert(t.to_string(), 1);
                    }
                });
                acc
            })
            .reduce(HashMap::new, |mut a, mut b| {
                if a.len() < b.len() {
                    std::mem::swap(&mut a, &mut b);
                }
                for (t, c) in b {
                    *a.entry(t).or_insert(0) += c;
                }
                a
            });
        let total_tokens = counts.values().sum();
        Self {
            counts,
            thresholds,
            component,
            tokenizer_fingerprint: tokenizer.fingerprint().to_string(),
            total_tokens,
            documents: texts.len(),
        }
    }

    /// Same counts, different band boundaries.
    pub fn with_thresholds(mut self, thresholds: BandThresholds) -> Self {
        self.thresholds = thresholds;
        self
    }

    pub fn thresholds(&self) -> BandThresholds {
        self.thresholds
    }

    pub fn component(&self) -> Component {
        self.component
    }

    pub fn tokenizer_fingerprint(&self) -> &str {
        &self.tokenizer_fingerprint
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn vocabulary_size(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    /// Band of an observed token; `None` for tokens never seen.
    pub fn band(&self, token: &str) -> Option<Band> {
        self.counts.get(token).map(|&c| self.thresholds.band(c))
    }

    pub fn is_mid(&self, token: &str) -> bool {
        self.band(token) == Some(Band::Mid)
    }

    /// Number of distinct tokens per band, as `(high, mid, low)`.
    pub fn band_sizes(&self) -> (usize, usize, usize) {
        self.counts.values().fold((0, 0, 0), |(h, m, l), &c| match self.thresholds.band(c) {
            Band::High => (h + 1, m, l),
            Band::Mid => (h, m + 1, l),
            Band::Low => (h, m, l + 1),
        })
    }

    /// `(token, count, band)` sorted by descending count, then token.
    pub fn entries(&self) -> Vec<(&str, u64, Band)> {
        let mut rows: Vec<(&str, u64, Band)> = self
            .counts
            .iter()
            .map(|(t, &c)| (t.as_str(), c, self.thresholds.band(c)))
            .collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        rows
    }

    /// CSV export with a `token,count,band` header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::format("frequency table CSV", e);
        w.write_record(["token", "count", "band"]).map_err(to_err)?;
        for (token, count, band) in self.entries() {
            w.write_record([token, &count.to_string(), band.as_str()]).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::format("frequency table CSV", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sample;

    #[test]
    fn band_boundary_examples() {
        let b = BandThresholds::default();
        assert_eq!(b.band(600), Band::High);
        assert_eq!(b.band(250), Band::Mid);
        assert_eq!(b.band(5), Band::Low);
        assert_eq!(b.band(10), Band::Mid);
        assert_eq!(b.band(500), Band::Mid);
        assert_eq!(b.band(501), Band::High);
        assert_eq!(b.band(9), Band::Low);
        assert!(BandThresholds::new(20, 10).is_err());
    }

    fn corpus(responses: &[String]) -> Corpus {
        Corpus::from_samples(
            responses
                .iter()
                .enumerate()
                .map(|(i, r)| Sample {
                    id: format!("{i:04}"),
                    instruction: "q".into(),
                    response: r.clone(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn counts_and_bands() {
        let mut docs = Vec::new();
        for i in 0..600 {
            let mut d = String::from("alpha");
            if i < 250 {
                d.push_str(" beta");
            }
            if i < 5 {
                d.push_str(" gamma");
            }
            docs.push(d);
        }
        let tok = TokenizerHandle::whitespace();
        let ft = build_frequency_table(&corpus(&docs), Component::Response, &tok);
        assert_eq!(ft.count("alpha"), 600);
        assert_eq!(ft.band("alpha"), Some(Band::High));
        assert_eq!(ft.band("beta"), Some(Band::Mid));
        assert_eq!(ft.band("gamma"), Some(Band::Low));
        assert_eq!(ft.band("delta"), None);
        assert_eq!(ft.total_tokens(), 600 + 250 + 5);
        assert_eq!(ft.band_sizes(), (1, 1, 1));

        let mut csv = Vec::new();
        ft.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv, "token,count,band\nalpha,600,high\nbeta,250,mid\ngamma,5,low\n");
    }

    #[test]
    fn csv_quotes_punctuation() {
        let tok = TokenizerHandle::whitespace();
        let ft = FrequencyTable::from_texts(&["a , \""], Component::Response, &tok, Default::default());
        let mut out = Vec::new();
        ft.write_csv(&mut out).unwrap();
        let mut reader = csv::Reader::from_reader(out.as_slice());
        let tokens: Vec<String> = reader.records().map(|r| r.unwrap()[0].to_string()).collect();
        assert_eq!(tokens, ["\"", ",", "a"]);
    }
}
