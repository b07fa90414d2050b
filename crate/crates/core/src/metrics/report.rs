use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bleu::{self_bleu_of, BleuParams};
use super::stats::{ols_slope, pearson};
use super::{
    compression_ratio, embedding_distance, embedding_distance_literal, entropy_of_counts, gini_of_counts,
    kurtosis_of_counts, ngram_ratio_of, Tokenized, DEFLATE_CODEC,
};
use crate::clustering::EmbeddingMatrix;
use crate::corpus::{Component, Strategy};
use crate::error::{Error, Result};
use crate::tokenization::TokenizerHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Nr,
    Ed,
    Sl,
    Cr,
    Bleu,
    Ie,
    Kurt,
    Gini,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Nr,
        Metric::Ed,
        Metric::Sl,
        Metric::Cr,
        Metric::Bleu,
        Metric::Ie,
        Metric::Kurt,
        Metric::Gini,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Nr => "nr",
            Metric::Ed => "ed",
            Metric::Sl => "sl",
            Metric::Cr => "cr",
            Metric::Bleu => "bleu",
            Metric::Ie => "ie",
            Metric::Kurt => "kurt",
            Metric::Gini => "gini",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::precondition(format!("unknown metric {s:?} (expected nr, ed, sl, cr, bleu, ie, kurt, gini)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub metrics: BTreeSet<Metric>,
    pub ngram_orders: Vec<usize>,
    pub bleu: BleuParams,
    /// Also report the embedding distance summed over ordered pairs and
    /// divided by the number of rows.
    pub ed_literal: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            metrics: Metric::ALL.into_iter().collect(),
            ngram_orders: vec![1, 2, 3],
            bleu: BleuParams::default(),
            ed_literal: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    /// N-gram ratio per order.
    pub nr: BTreeMap<usize, f64>,
    pub ed: Option<f64>,
    pub ed_literal: Option<f64>,
    pub sl: Option<f64>,
    pub cr: Option<f64>,
    pub self_bleu: Option<f64>,
    pub self_bleu_sampled: Option<bool>,
    pub ie: Option<f64>,
    pub kurtosis: Option<f64>,
    pub gini: Option<f64>,
}

impl MetricValues {
    /// Named numeric values, `nr_<n>` for n-gram ratios.
    pub fn flat(&self) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> = self.nr.iter().map(|(n, v)| (format!("nr_{n}"), *v)).collect();
        let named = [
            ("ed", self.ed),
            ("ed_literal", self.ed_literal),
            ("sl", self.sl),
            ("cr", self.cr),
            ("self_bleu", self.self_bleu),
            ("ie", self.ie),
            ("kurtosis", self.kurtosis),
            ("gini", self.gini),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                out.insert(k.to_string(), v);
            }
        }
        out
    }
}

/// Computes the selected metrics of one dataset component. Embedding distance
/// needs `embeddings` rows for exactly the dataset's samples.
pub fn compute_metrics(
    texts: &[&str],
    tok: &TokenizerHandle,
    embeddings: Option<&EmbeddingMatrix>,
    options: &MetricOptions,
) -> Result<MetricValues> {
    if texts.is_empty() {
        return Err(Error::precondition("metrics of an empty dataset"));
    }
    let wants = |m| options.metrics.contains(&m);
    let tokenized = Tokenized::new(texts, tok);
    let counts = tokenized.counts();
    let mut v = MetricValues::default();
    if wants(Metric::Nr) {
        for &n in &options.ngram_orders {
            v.nr.insert(n, ngram_ratio_of(&tokenized, n)?);
        }
    }
    if wants(Metric::Ed) {
        let e = embeddings.ok_or_else(|| Error::precondition("embedding distance needs embeddings"))?;
        v.ed = Some(embedding_distance(e)?);
        if options.ed_literal {
            v.ed_literal = Some(embedding_distance_literal(e)?);
        }
    }
    if wants(Metric::Sl) {
        v.sl = Some(counts.iter().sum::<u64>() as f64 / texts.len() as f64);
    }
    if wants(Metric::Cr) {
        v.cr = Some(compression_ratio(texts)?);
    }
    if wants(Metric::Bleu) {
        let r = self_bleu_of(texts, &tokenized, &options.bleu)?;
        v.self_bleu = Some(r.score);
        v.self_bleu_sampled = Some(r.sampled);
    }
    if wants(Metric::Ie) {
        v.ie = Some(entropy_of_counts(&counts)?);
    }
    if wants(Metric::Kurt) {
        v.kurtosis = Some(kurtosis_of_counts(&counts)?);
    }
    if wants(Metric::Gini) {
        v.gini = Some(gini_of_counts(&counts)?);
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMetrics {
    pub component: Component,
    pub samples: usize,
    pub tokenizer_fingerprint: String,
    pub embedding_fingerprint: Option<String>,
    pub values: MetricValues,
}

/// Fixed conventions every report states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    pub entropy_log: String,
    pub ed_normalizer: String,
    pub compression_codec: String,
    pub kurtosis_of: String,
    pub bleu: BleuParams,
    pub ngram_orders: Vec<usize>,
}

impl ReportSettings {
    pub fn new(options: &MetricOptions) -> Self {
        Self {
            entropy_log: "natural".into(),
            ed_normalizer: "mean over unordered pairs".into(),
            compression_codec: DEFLATE_CODEC.into(),
            kurtosis_of: "per-token occurrence counts, population excess kurtosis".into(),
            bleu: options.bleu,
            ngram_orders: options.ngram_orders.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Label matched against score files.
    pub dataset: String,
    pub strategy: Option<Strategy>,
    pub diversity_value: Option<u64>,
    pub diversity_percent: Option<f64>,
    pub manifest_digest: Option<String>,
    pub components: Vec<ComponentMetrics>,
    pub settings: ReportSettings,
}

const CSV_VALUES: [&str; 8] = ["ed", "ed_literal", "sl", "cr", "self_bleu", "ie", "kurtosis", "gini"];

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        serde_json::from_str(raw).map_err(|e| Error::format("metric report", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Values keyed `<component>.<metric>`.
    pub fn flat(&self) -> BTreeMap<String, f64> {
        self.components
            .iter()
            .flat_map(|c| {
                c.values
                    .flat()
                    .into_iter()
                    .map(move |(k, v)| (format!("{}.{k}", c.component), v))
            })
            .collect()
    }

    /// One CSV row per component; n-gram columns cover every order present.
    pub fn write_csv(reports: &[MetricReport], path: &Path) -> Result<()> {
        let orders: BTreeSet<usize> = reports
            .iter()
            .flat_map(|r| r.components.iter().flat_map(|c| c.values.nr.keys().copied()))
            .collect();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header: Vec<String> = ["dataset", "strategy", "diversity_value", "diversity_percent", "component", "samples"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(orders.iter().map(|n| format!("nr_{n}")));
        header.extend(CSV_VALUES.iter().map(|s| s.to_string()));
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in reports {
            for c in &r.components {
                let mut row = vec![
                    r.dataset.clone(),
                    r.strategy.map(|s| s.to_string()).unwrap_or_default(),
                    r.diversity_value.map(|v| v.to_string()).unwrap_or_default(),
                    cell(r.diversity_percent),
                    c.component.to_string(),
                    c.samples.to_string(),
                ];
                row.extend(orders.iter().map(|n| cell(c.values.nr.get(n).copied())));
                let flat = c.values.flat();
                row.extend(CSV_VALUES.iter().map(|k| cell(flat.get(*k).copied())));
                w.write_record(&row).map_err(|e| csv_error(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format("csv", format!("{other:?}")),
    }
}

/// A metric report paired with a downstream evaluation score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredReport {
    pub report: MetricReport,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySlope {
    pub points: usize,
    /// Least-squares slope of score on diversity percent, times 100.
    pub slope_e2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub datasets: usize,
    /// Pearson r between each metric and the score across datasets.
    pub pearson: BTreeMap<String, f64>,
    pub slopes: BTreeMap<String, StrategySlope>,
    pub slope_unit: String,
    /// Metrics or strategies left out, with the reason.
    pub skipped: BTreeMap<String, String>,
}

/// Correlates every metric present in all reports with the scores, and fits
/// score against diversity percent per strategy.
pub fn correlate(inputs: &[ScoredReport]) -> Result<CorrelationReport> {
    if inputs.len() < 2 {
        return Err(Error::precondition(format!("correlation needs at least 2 scored datasets, got {}", inputs.len())));
    }
    let flats: Vec<BTreeMap<String, f64>> = inputs.iter().map(|i| i.report.flat()).collect();
    let scores: Vec<f64> = inputs.iter().map(|i| i.score).collect();
    let keys: BTreeSet<&String> = flats.iter().flat_map(|f| f.keys()).collect();
    let mut out = CorrelationReport {
        datasets: inputs.len(),
        pearson: BTreeMap::new(),
        slopes: BTreeMap::new(),
        slope_unit: "score per diversity percent, x1e-2".into(),
        skipped: BTreeMap::new(),
    };
    for key in keys {
        let xs: Option<Vec<f64>> = flats.iter().map(|f| f.get(key).copied()).collect();
        match xs {
            None => {
                out.skipped.insert(key.clone(), "missing from some reports".into());
            }
            Some(xs) => match pearson(&xs, &scores) {
                Ok(r) => {
                    out.pearson.insert(key.clone(), r);
                }
                Err(e) => {
                    out.skipped.insert(key.clone(), e.to_string());
                }
            },
        }
    }
    let mut by_strategy: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for i in inputs {
        if let (Some(s), Some(p)) = (i.report.strategy, i.report.diversity_percent) {
            let e = by_strategy.entry(s.to_string()).or_default();
            e.0.push(p);
            e.1.push(i.score);
        }
    }
    for (strategy, (xs, ys)) in by_strategy {
        match ols_slope(&xs, &ys) {
            Ok(slope) => {
                out.slopes.insert(
                    strategy,
                    StrategySlope {
                        points: xs.len(),
                        slope_e2: slope * 100.0,
                    },
                );
            }
            Err(e) => {
                out.skipped.insert(format!("slope.{strategy}"), e.to_string());
            }
        }
    }
    Ok(out)
}

impl CorrelationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Rows of `kind,name,value,points`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["kind", "name", "value", "points"]).map_err(|e| csv_error(path, e))?;
        for (k, r) in &self.pearson {
            w.write_record(["pearson", k, &r.to_string(), &self.datasets.to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
        for (k, s) in &self.slopes {
            w.write_record(["slope_e2", k, &s.slope_e2.to_string(), &s.points.to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(name: &str, strategy: Strategy, pct: f64, sl: f64) -> MetricReport {
        MetricReport {
            dataset: name.into(),
            strategy: Some(strategy),
            diversity_value: None,
            diversity_percent: Some(pct),
            manifest_digest: None,
            components: vec![ComponentMetrics {
                component: Component::Response,
                samples: 3,
                tokenizer_fingerprint: String::new(),
                embedding_fingerprint: None,
                values: MetricValues {
                    sl: Some(sl),
                    ..MetricValues::default()
                },
            }],
            settings: ReportSettings::new(&MetricOptions::default()),
        }
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("bogus".parse::<Metric>().is_err());
    }

    #[test]
    fn correlation_and_slope() {
        let inputs = vec![
            ScoredReport { report: report("a", Strategy::Micro, 0.0, 1.0), score: 50.0 },
            ScoredReport { report: report("b", Strategy::Micro, 100.0, 3.0), score: 55.0 },
            ScoredReport { report: report("c", Strategy::Macro, 0.0, 2.0), score: 52.5 },
        ];
        let c = correlate(&inputs).unwrap();
        assert!((c.pearson["response.sl"] - 1.0).abs() < 1e-12);
        assert!((c.slopes["micro"].slope_e2 - 5.0).abs() < 1e-12);
        assert!(c.skipped.contains_key("slope.macro"));
    }

    #[test]
    fn computes_requested_metrics_only() {
        let opts = MetricOptions {
            metrics: [Metric::Sl, Metric::Gini].into_iter().collect(),
            ..MetricOptions::default()
        };
        let v = compute_metrics(&["a b", "c d e f"], &TokenizerHandle::whitespace(), None, &opts).unwrap();
        assert_eq!(v.sl, Some(3.0));
        assert!(v.ie.is_none());
        assert!(compute_metrics(&["a"], &TokenizerHandle::whitespace(), None, &MetricOptions::default()).is_err());
    }

    #[test]
    fn csv_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let r = report("a", Strategy::Meso, 50.0, 2.0);
        assert_eq!(MetricReport::from_json(&r.to_json()).unwrap(), r);
        let path = dir.path().join("m.csv");
        MetricReport::write_csv(&[r], &path).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert!(text.starts_with("dataset,strategy,diversity_value,diversity_percent,component,samples,ed,"));
        assert!(text.contains("a,meso,,50,response,3,,,2,"));
    }
}
