use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use divforge_core::clustering::EmbeddingMatrix;
use divforge_core::corpus::{ingest as ingest_corpus, read_samples};
use divforge_core::macro_strategy::{build_macro_series, build_topic_model};
use divforge_core::meso_strategy::{
    build_meso_series, build_tag_catalog, filter_tags, ingest_tags, DEFAULT_EPS, DEFAULT_MIN_SAMPLES,
};
use divforge_core::metrics::{
    compute_metrics, correlate as correlate_reports, BleuParams, ComponentMetrics, Metric, MetricOptions,
    MetricReport, ReportSettings, ScoredReport,
};
use divforge_core::micro_strategy::{build_micro_series, MicroSeriesParams, SamplingParams};
use divforge_core::{
    BandThresholds, Component, Corpus, Error, FrequencyTable, Result, Sample, SeriesManifest, Strategy,
    TokenizerHandle,
};
use serde_json::{json, Value};

use crate::config::{Config, Resolver};
use crate::{BuildArgs, CorrelateArgs, ExportArgs, IngestArgs, MetricsArgs, TokenstatsArgs};

const MANIFEST_FILE: &str = "manifest.json";

fn point_file(i: usize) -> String {
    format!("point_{i:02}.jsonl")
}

/// A store directory, or a JSONL file ingested on the fly.
fn load_corpus(path: &Path) -> Result<Corpus> {
    if path.is_dir() {
        Corpus::load(path)
    } else {
        ingest_corpus(path)
    }
}

fn load_tokenizer(spec: &str) -> Result<TokenizerHandle> {
    if spec == "whitespace" {
        Ok(TokenizerHandle::whitespace())
    } else {
        TokenizerHandle::from_bpe_file(Path::new(spec))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_json(v: &Value) {
    emit(&(serde_json::to_string_pretty(v).expect("json value") + "\n"));
}

pub fn ingest(config: &Config, a: IngestArgs) -> Result<()> {
    let mut r = Resolver::new(config, "ingest");
    let input: PathBuf = r.required("input", a.input, "")?;
    let out: PathBuf = r.required("out", a.out, "")?;
    let corpus = ingest_corpus(&input)?;
    corpus.save(&out)?;
    let p = corpus.provenance();
    print_json(&json!({
        "store": out,
        "samples": corpus.len(),
        "source_digest": p.source_digest,
        "stats": p.stats,
        "dropped": p.stats.dropped(),
    }));
    Ok(())
}

fn thresholds(r: &mut Resolver, low: Option<u64>, high: Option<u64>) -> Result<BandThresholds> {
    let d = BandThresholds::default();
    let low = r.or("band_low_max", low, d.low_max)?;
    let high = r.or("band_high_min", high, d.high_min)?;
    BandThresholds::new(low, high)
}

pub fn tokenstats(config: &Config, a: TokenstatsArgs) -> Result<()> {
    let mut r = Resolver::new(config, "tokenstats");
    let corpus_path: PathBuf = r.required("corpus", a.corpus, "")?;
    let component: Component = r.required("component", a.component, "")?;
    let tokenizer: String = r.required("tokenizer", a.tokenizer, " (a BPE definition file or `whitespace`)")?;
    let bands = thresholds(&mut r, a.band_low_max, a.band_high_min)?;
    let out: Option<PathBuf> = r.opt("out", a.out)?;

    let corpus = load_corpus(&corpus_path)?;
    let tok = load_tokenizer(&tokenizer)?;
    let texts: Vec<&str> = corpus.samples().iter().map(|s| s.text(component)).collect();
    let table = FrequencyTable::from_texts(&texts, component, &tok, bands);
    if let Some(out) = &out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = fs::File::create(out).map_err(|e| Error::io(out, e))?;
        let mut w = std::io::BufWriter::new(file);
        table.write_csv(&mut w)?;
        w.flush().map_err(|e| Error::io(out, e))?;
    }
    let (high, mid, low) = table.band_sizes();
    print_json(&json!({
        "component": component,
        "tokenizer_kind": tok.kind(),
        "tokenizer_fingerprint": tok.fingerprint(),
        "documents": table.documents(),
        "total_tokens": table.total_tokens(),
        "vocabulary": table.vocabulary_size(),
        "bands": {"high": high, "mid": mid, "low": low},
        "thresholds": bands,
        "parameters": r.echo,
    }));
    Ok(())
}

pub fn build(config: &Config, a: BuildArgs) -> Result<()> {
    let mut r = Resolver::new(config, "build");
    let strategy: Strategy = r.required("strategy", a.strategy, " (micro, macro or meso)")?;
    let corpus_path: PathBuf = r.required("corpus", a.corpus, "")?;
    let component: Component = r.required("component", a.component, "")?;
    let size: usize = r.required("size", a.size, "")?;
    let points: usize = r.required("points", a.points, "")?;
    let seed: u64 = r.required("seed", a.seed, " (series builds are seeded; there is no default)")?;
    let out: PathBuf = r.required("out", a.out, "")?;

    let corpus = load_corpus(&corpus_path)?;
    let mut manifest = match strategy {
        Strategy::Micro => {
            let tokenizer: String = r.required(
                "tokenizer",
                a.tokenizer,
                " for micro builds (a BPE definition file or `whitespace`)",
            )?;
            let defaults = SamplingParams::default();
            let mut params = MicroSeriesParams::new(size, points, seed);
            params.sampling = SamplingParams {
                alpha: r.or("alpha", a.alpha, defaults.alpha)?,
                batch: r.or("batch", a.batch, defaults.batch)?,
            };
            params.thresholds = thresholds(&mut r, a.band_low_max, a.band_high_min)?;
            params.per_subset_bands = r.or("per_subset_bands", a.per_subset_bands, false)?;
            let tok = load_tokenizer(&tokenizer)?;
            build_micro_series(&corpus, component, &tok, &params)?
        }
        Strategy::Macro => {
            let path: PathBuf = r.required("embeddings", a.embeddings, " for macro builds (sample embedding file)")?;
            let mcs = r.or("min_cluster_size", a.min_cluster_size, 20)?;
            let embeddings = EmbeddingMatrix::load(&path)?;
            let model = build_topic_model(&corpus, component, &embeddings, mcs)?;
            build_macro_series(&model, size, points, seed)?
        }
        Strategy::Meso => {
            let tags: PathBuf = r.required("tags", a.tags, " for meso builds (tags JSONL file)")?;
            let tag_path: PathBuf =
                r.required("tag_embeddings", a.tag_embeddings, " for meso builds (tag embedding file)")?;
            let eps = r.or("eps", a.eps, DEFAULT_EPS)?;
            let min_samples = r.or("min_samples", a.min_samples, DEFAULT_MIN_SAMPLES)?;
            let loaded = ingest_tags(&tags, &corpus)?;
            log::info!(
                "tags: {} records kept, {} dropped ({} unknown ids)",
                loaded.records.len(),
                loaded.dropped(),
                loaded.unknown_ids
            );
            let records = filter_tags(loaded.records);
            let embeddings = EmbeddingMatrix::load(&tag_path)?;
            let catalog = build_tag_catalog(&records, &embeddings, eps, min_samples)?;
            let mut m = build_meso_series(&catalog, &corpus, component, size, points, seed)?;
            m.parameters.insert(
                "tag_ingest".into(),
                json!({
                    "lines": loaded.lines,
                    "malformed": loaded.malformed,
                    "unknown_ids": loaded.unknown_ids,
                    "duplicate_ids": loaded.duplicate_ids,
                    "empty": loaded.empty,
                }),
            );
            m
        }
    };
    // The output location is not part of the series; leaving it out keeps
    // manifests byte-identical across destinations.
    let mut echo = r.echo;
    echo.remove("out");
    manifest.parameters.insert("run_config".into(), Value::Object(echo));
    manifest.parameters.insert("corpus_digest".into(), json!(corpus.provenance().source_digest));
    write_series(&corpus, &manifest, &out, None)?;
    print_json(&json!({
        "manifest": out.join(MANIFEST_FILE),
        "points": manifest.points.iter().map(|p| json!({
            "diversity_value": p.diversity_value,
            "diversity_percent": p.diversity_percent,
            "samples": p.sample_ids.len(),
        })).collect::<Vec<_>>(),
    }));
    Ok(())
}

fn write_series(corpus: &Corpus, manifest: &SeriesManifest, out: &Path, only: Option<usize>) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (i, p) in manifest.points.iter().enumerate() {
        if only.is_none_or(|o| o == i) {
            corpus.export_subset(&p.sample_ids, &out.join(point_file(i)))?;
        }
    }
    if only.is_none() {
        manifest.save(&out.join(MANIFEST_FILE))?;
    }
    Ok(())
}

pub fn export(config: &Config, a: ExportArgs) -> Result<()> {
    let mut r = Resolver::new(config, "export");
    let corpus_path: PathBuf = r.required("corpus", a.corpus, "")?;
    let manifest_path: PathBuf = r.required("manifest", a.manifest, "")?;
    let out: PathBuf = r.required("out", a.out, "")?;
    let point: Option<usize> = r.opt("point", a.point)?;
    let corpus = load_corpus(&corpus_path)?;
    let manifest = SeriesManifest::load(&manifest_path)?;
    manifest.validate(&corpus)?;
    if let Some(p) = point {
        if p >= manifest.points.len() {
            return Err(Error::precondition(format!(
                "point {p} out of range; manifest has {} points",
                manifest.points.len()
            )));
        }
    }
    write_series(&corpus, &manifest, &out, point)
}

struct Dataset {
    samples: Vec<Sample>,
    strategy: Option<Strategy>,
    diversity_value: Option<u64>,
    diversity_percent: Option<f64>,
    manifest_digest: Option<String>,
}

fn load_dataset(spec: &str, corpus: Option<&Path>) -> Result<Dataset> {
    if let Some((manifest_path, index)) = spec.rsplit_once('#') {
        let index: usize = index
            .parse()
            .map_err(|_| Error::precondition(format!("bad point index in {spec:?}")))?;
        let corpus_path =
            corpus.ok_or_else(|| Error::precondition("--corpus is required with a <manifest>#<point> dataset"))?;
        let manifest = SeriesManifest::load(Path::new(manifest_path))?;
        let point = manifest.points.get(index).ok_or_else(|| {
            Error::precondition(format!("point {index} out of range; manifest has {} points", manifest.points.len()))
        })?;
        let corpus = load_corpus(corpus_path)?;
        let wanted: BTreeSet<&str> = point.sample_ids.iter().map(String::as_str).collect();
        let missing: Vec<String> = wanted.iter().filter(|id| !corpus.contains(id)).map(|s| s.to_string()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingIds {
                what: "corpus",
                missing,
            });
        }
        let samples = corpus
            .samples()
            .iter()
            .filter(|s| wanted.contains(s.id.as_str()))
            .cloned()
            .collect();
        Ok(Dataset {
            samples,
            strategy: Some(manifest.strategy),
            diversity_value: Some(point.diversity_value),
            diversity_percent: Some(point.diversity_percent),
            manifest_digest: Some(manifest.digest()),
        })
    } else {
        Ok(Dataset {
            samples: read_samples(Path::new(spec))?,
            strategy: None,
            diversity_value: None,
            diversity_percent: None,
            manifest_digest: None,
        })
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::precondition(format!("bad {what} {s:?}")))
        })
        .collect()
}

pub fn metrics(config: &Config, a: MetricsArgs) -> Result<()> {
    let mut r = Resolver::new(config, "metrics");
    let spec: String = r.required("dataset", a.dataset, " (JSONL file or <manifest.json>#<point>)")?;
    let corpus: Option<PathBuf> = r.opt("corpus", a.corpus)?;
    let name: String = r.or("name", a.name, spec.clone())?;
    let components = match r.or("component", a.component, "both".to_string())?.as_str() {
        "both" => vec![Component::Instruction, Component::Response],
        other => vec![other.parse()?],
    };
    let embeddings_path: Option<PathBuf> = r.opt("embeddings", a.embeddings)?;
    let default_metrics = Metric::ALL
        .iter()
        .filter(|m| **m != Metric::Ed || embeddings_path.is_some())
        .map(|m| m.name())
        .collect::<Vec<_>>()
        .join(",");
    let metric_list: Vec<Metric> = parse_list(&r.or("metrics", a.metrics, default_metrics)?, "metric")?;
    let orders: Vec<usize> = parse_list(&r.or("ngram", a.ngram, "1,2,3".to_string())?, "n-gram order")?;
    let tokenizer: String = r.or("tokenizer", a.tokenizer, "whitespace".to_string())?;
    let ed_literal = r.or("ed_literal", a.ed_literal, false)?;
    let defaults = BleuParams::default();
    let sample_limit = r.or("bleu_sample_limit", a.bleu_sample_limit, defaults.sample_limit)?;
    let seed: Option<u64> = r.opt("seed", a.seed)?;
    let out: Option<PathBuf> = r.opt("out", a.out)?;

    if metric_list.contains(&Metric::Ed) && embeddings_path.is_none() {
        return Err(Error::precondition("--embeddings is required for the ed metric"));
    }
    let dataset = load_dataset(&spec, corpus.as_deref())?;
    let n = dataset.samples.len();
    if metric_list.contains(&Metric::Bleu) && n > sample_limit + 1 && seed.is_none() {
        return Err(Error::precondition(format!(
            "--seed is required: Self-BLEU samples references for {n} texts (limit {sample_limit})"
        )));
    }
    let options = MetricOptions {
        metrics: metric_list.into_iter().collect(),
        ngram_orders: orders,
        bleu: BleuParams {
            sample_limit,
            seed: seed.unwrap_or(0),
            ..defaults
        },
        ed_literal,
    };
    let tok = load_tokenizer(&tokenizer)?;
    let embeddings = match &embeddings_path {
        Some(p) => {
            let ids: Vec<&str> = dataset.samples.iter().map(|s| s.id.as_str()).collect();
            Some(EmbeddingMatrix::load(p)?.select(&ids)?)
        }
        None => None,
    };

    let mut rows = Vec::new();
    for component in components {
        let texts: Vec<&str> = dataset.samples.iter().map(|s| s.text(component)).collect();
        let values = compute_metrics(&texts, &tok, embeddings.as_ref(), &options)?;
        rows.push(ComponentMetrics {
            component,
            samples: n,
            tokenizer_fingerprint: tok.fingerprint().to_string(),
            embedding_fingerprint: embeddings.as_ref().map(EmbeddingMatrix::fingerprint),
            values,
        });
    }
    let report = MetricReport {
        dataset: name,
        strategy: dataset.strategy,
        diversity_value: dataset.diversity_value,
        diversity_percent: dataset.diversity_percent,
        manifest_digest: dataset.manifest_digest,
        components: rows,
        settings: ReportSettings::new(&options),
    };
    match out {
        Some(prefix) => {
            write_file(&with_suffix(&prefix, "json"), &report.to_json())?;
            MetricReport::write_csv(std::slice::from_ref(&report), &with_suffix(&prefix, "csv"))?;
        }
        None => emit(&report.to_json()),
    }
    Ok(())
}

fn read_scores(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format("scores CSV", e))?;
    let headers = rdr.headers().map_err(|e| Error::format("scores CSV", e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::format("scores CSV", format!("missing column {name:?}")))
    };
    let (id_col, score_col) = (col("id")?, col("score")?);
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::format("scores CSV", e))?;
        let id = rec.get(id_col).unwrap_or_default().trim().to_string();
        let raw = rec.get(score_col).unwrap_or_default().trim();
        let score: f64 = raw
            .parse()
            .map_err(|_| Error::format("scores CSV", format!("bad score {raw:?} for {id:?}")))?;
        if out.insert(id.clone(), score).is_some() {
            return Err(Error::format("scores CSV", format!("id {id:?} appears twice")));
        }
    }
    Ok(out)
}

pub fn correlate(config: &Config, a: CorrelateArgs) -> Result<()> {
    let mut r = Resolver::new(config, "correlate");
    let pattern: String = r.required("reports", a.reports, " (glob of metric report JSON files)")?;
    let scores_path: PathBuf = r.required("scores", a.scores, " (CSV with id,score)")?;
    let out: Option<PathBuf> = r.opt("out", a.out)?;

    let mut paths: Vec<PathBuf> = glob::glob(&pattern)
        .map_err(|e| Error::precondition(format!("bad glob {pattern:?}: {e}")))?
        .filter_map(std::result::Result::ok)
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::precondition(format!("no report matches {pattern:?}")));
    }
    let reports: Vec<MetricReport> = paths.iter().map(|p| MetricReport::load(p)).collect::<Result<_>>()?;
    let scores = read_scores(&scores_path)?;
    let names: BTreeSet<&str> = reports.iter().map(|r| r.dataset.as_str()).collect();
    let mut missing: Vec<String> = names
        .iter()
        .filter(|n| !scores.contains_key(**n))
        .map(|n| format!("{n} (no score)"))
        .collect();
    missing.extend(scores.keys().filter(|k| !names.contains(k.as_str())).map(|k| format!("{k} (no report)")));
    if !missing.is_empty() {
        return Err(Error::MissingIds {
            what: "reports/scores join",
            missing,
        });
    }
    let inputs: Vec<ScoredReport> = reports
        .into_iter()
        .map(|report| {
            let score = scores[&report.dataset];
            ScoredReport { report, score }
        })
        .collect();
    let report = correlate_reports(&inputs)?;
    match out {
        Some(prefix) => {
            write_file(&with_suffix(&prefix, "json"), &report.to_json())?;
            report.write_csv(&with_suffix(&prefix, "csv"))?;
        }
        None => emit(&report.to_json()),
    }
    Ok(())
}
