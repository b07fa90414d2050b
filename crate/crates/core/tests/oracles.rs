//! Pipeline outputs checked against independent recomputation.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use common::*;
use divforge_core::clustering::{distance, pca_reduce};
use divforge_core::corpus::length_window_filter;
use divforge_core::macro_strategy::{build_macro_series, build_topic_model};
use divforge_core::meso_strategy::{build_meso_series, build_tag_catalog, filter_tags, ingest_tags, TagRecord};
use divforge_core::metrics::kurtosis_of_counts;
use divforge_core::micro_strategy::{build_micro_series, token_aware_sample, MicroSeriesParams, SamplingParams};
use divforge_core::tokenization::{build_frequency_table, build_token_set_index};
use divforge_core::{Component, Corpus, EmbeddingMatrix, Sample, TokenSetIndex, TokenizerHandle};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn ws() -> TokenizerHandle {
    TokenizerHandle::whitespace()
}

#[test]
fn pca_plane_in_five_dimensions_reconstructs() {
    let mut r = rng(1);
    let u: Vec<f64> = (0..5).map(|_| r.gen_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..5).map(|_| r.gen_range(-1.0..1.0)).collect();
    let offset: Vec<f64> = (0..5).map(|_| r.gen_range(-3.0..3.0)).collect();
    let points: Vec<Vec<f64>> = (0..60)
        .map(|_| {
            let (a, b) = (r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0));
            (0..5).map(|j| offset[j] + a * u[j] + b * v[j]).collect()
        })
        .collect();
    let p = pca_reduce(&matrix(&points), 2).unwrap();
    for (i, x) in points.iter().enumerate() {
        let back = p.reconstruct(p.matrix.row(i));
        assert!(distance(&back, x) <= 1e-9, "row {i}: {back:?} vs {x:?}");
    }
}

#[test]
fn pca_full_rank_preserves_distances() {
    let mut r = rng(2);
    let points: Vec<Vec<f64>> = (0..40).map(|_| (0..6).map(|_| r.gen_range(-2.0..2.0)).collect()).collect();
    let p = pca_reduce(&matrix(&points), 6).unwrap();
    for a in 0..40 {
        for b in 0..40 {
            let before = distance(&points[a], &points[b]);
            let after = distance(p.matrix.row(a), p.matrix.row(b));
            assert!((before - after).abs() <= 1e-9);
        }
    }
}

#[test]
fn pca_explained_variance_matches_svd() {
    let mut r = rng(3);
    let (n, d) = (100, 10);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|j| r.gen_range(-1.0..1.0) * (j + 1) as f64).collect())
        .collect();
    let p = pca_reduce(&matrix(&points), 4).unwrap();
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    let mut singular: Vec<f64> = centered.svd(false, false).singular_values.iter().copied().collect();
    singular.sort_by(|a, b| b.total_cmp(a));
    for (k, got) in p.explained_variance.iter().enumerate() {
        let expected = singular[k] * singular[k] / (n as f64 - 1.0);
        assert!((got - expected).abs() <= 1e-6, "component {k}: {got} vs {expected}");
    }
    let total: f64 = singular.iter().map(|s| s * s).sum::<f64>() / (n as f64 - 1.0);
    assert!((p.total_variance - total).abs() <= 1e-6);
}

#[test]
fn token_set_index_is_the_transpose_of_a_brute_force_rebuild() {
    let corpus = breadth_corpus(1000, 12.0, 5);
    let table = build_frequency_table(&corpus, Component::Response, &ws());
    let index = build_token_set_index(&corpus, Component::Response, &table, &ws()).unwrap();
    let mut expected: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for s in corpus.samples() {
        for w in s.response.split_whitespace() {
            if table.is_mid(w) {
                expected.entry(w.to_string()).or_default().insert(s.id.clone());
            }
        }
    }
    assert_eq!(index.token_count(), expected.len());
    for (token, holders) in &expected {
        let t = index.token_index(token).unwrap();
        let got: BTreeSet<String> = index.ids_of(index.holders(t)).into_iter().collect();
        assert_eq!(&got, holders, "holders of {token}");
    }
    for d in 0..index.len() as u32 {
        for &t in index.set(d) {
            assert!(index.holders(t).contains(&d));
        }
    }
}

/// 200 samples over 60 mid-band tokens: every sample repeats one token, and
/// every fourth sample also mentions a second one.
fn toy_corpus() -> Corpus {
    let samples = (0..200)
        .map(|i| {
            let mut words: Vec<String> = (0..6).map(|_| "filler".to_string()).collect();
            words.extend((0..5).map(|_| format!("m{:02}", i % 60)));
            if i % 4 == 0 {
                words.push(format!("m{:02}", (i / 4 * 7) % 60));
            }
            Sample {
                id: format!("t{i:03}"),
                instruction: "q".into(),
                response: words.join(" "),
            }
        })
        .collect();
    Corpus::from_samples(samples).unwrap()
}

#[test]
fn toy_micro_series_matches_recount() {
    let corpus = toy_corpus();
    let table = build_frequency_table(&corpus, Component::Response, &ws());
    let mid = table.band_sizes().1;
    assert!(mid == 60, "toy corpus has {mid} mid tokens");
    let series = build_micro_series(&corpus, Component::Response, &ws(), &MicroSeriesParams::new(50, 3, 0)).unwrap();
    let targets: Vec<u64> = serde_json::from_value(series.parameters["targets"].clone()).unwrap();
    let mut last = 0;
    for (point, target) in series.points.iter().zip(&targets) {
        let mut recount = BTreeSet::new();
        for id in &point.sample_ids {
            for w in corpus.get(id).unwrap().response.split_whitespace() {
                if table.is_mid(w) {
                    recount.insert(w);
                }
            }
        }
        assert_eq!(recount.len() as u64, point.diversity_value);
        assert!(point.diversity_value >= last);
        assert!(point.diversity_value.abs_diff(*target) <= 2, "achieved {} for target {target}", point.diversity_value);
        last = point.diversity_value;
    }
}

#[test]
fn sampling_counts_match_recount_and_cover_when_possible() {
    let mut r = rng(9);
    for _ in 0..100 {
        let sets = random_sets(&mut r, 40, 60);
        let index = TokenSetIndex::from_sets(sets.clone());
        let all: Vec<u32> = (0..index.len() as u32).collect();
        let tokens: Vec<u32> = (0..index.token_count() as u32).collect();
        let n = r.gen_range(1..=index.len());
        let out = token_aware_sample(&index, &all, &tokens, n, SamplingParams::default()).unwrap();
        assert_eq!(out.selected.len(), n.min(index.len()));
        let mut counts = vec![0u32; index.token_count()];
        for &d in &out.selected {
            for &t in index.set(d) {
                counts[t as usize] += 1;
            }
        }
        assert_eq!(counts, out.counts);
        // Every token is coverable with one sample per token, so coverage
        // completes whenever n allows the greedy cover.
        if n == index.len() {
            assert_eq!(out.covered(), index.token_count());
        }
    }
}

#[test]
fn length_window_matches_scan() {
    let corpus = breadth_corpus(500, 10.0, 12);
    let got = length_window_filter(&corpus, Component::Response, 30, Some(55), &ws()).unwrap();
    let expected: BTreeSet<String> = corpus
        .samples()
        .iter()
        .filter(|s| (30..=55).contains(&s.response.split_whitespace().count()))
        .map(|s| s.id.clone())
        .collect();
    assert_eq!(got, expected);
}

/// Samples spread over `topics` well-separated Gaussian blobs living in a
/// 5-dimensional subspace of a 16-dimensional space.
fn planted_topics(topics: usize, per_topic: usize, seed: u64) -> (Corpus, EmbeddingMatrix, Vec<usize>) {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 0.4).unwrap();
    let mut centers: Vec<Vec<f64>> = Vec::new();
    while centers.len() < topics {
        let c: Vec<f64> = (0..5).map(|_| r.gen_range(-20.0..20.0)).collect();
        if centers.iter().all(|o| distance(o, &c) > 6.0) {
            centers.push(c);
        }
    }
    let mut samples = Vec::new();
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (t, c) in centers.iter().enumerate() {
        for j in 0..per_topic {
            let id = format!("s{t:02}_{j:04}");
            let mut row: Vec<f64> = c.iter().map(|x| x + normal.sample(&mut r)).collect();
            row.extend((0..11).map(|_| normal.sample(&mut r) * 0.1));
            samples.push(Sample {
                id: id.clone(),
                instruction: format!("topic {t} question {j}"),
                response: format!("answer {j}"),
            });
            rows.push(row);
            truth.push(t);
        }
    }
    let ids = samples.iter().map(|s| s.id.clone()).collect();
    let corpus = Corpus::from_samples(samples).unwrap();
    (corpus, EmbeddingMatrix::new(ids, rows).unwrap(), truth)
}

#[test]
fn planted_topics_are_recovered() {
    let (corpus, e, _) = planted_topics(40, 125, 21);
    let model = build_topic_model(&corpus, Component::Instruction, &e, 20).unwrap();
    let k = model.assignment.k;
    assert!((36..=44).contains(&k), "recovered {k} topics");
}

#[test]
fn macro_series_topic_counts_increase() {
    let (corpus, e, truth) = planted_topics(10, 120, 22);
    let topic_of: HashMap<&str, usize> =
        e.ids().iter().map(String::as_str).zip(truth.iter().copied()).collect();
    let model = build_topic_model(&corpus, Component::Instruction, &e, 20).unwrap();
    let series = build_macro_series(&model, 500, 5, 4).unwrap();
    let classes = model.classes();
    let mut last = 0;
    for point in &series.points {
        let k = point.diversity_value as usize;
        let allowed: BTreeSet<&str> = classes[..k].iter().flat_map(|c| c.members.iter().map(String::as_str)).collect();
        assert!(point.sample_ids.iter().all(|id| allowed.contains(id.as_str())));
        let topics: BTreeSet<usize> = point.sample_ids.iter().map(|id| topic_of[id.as_str()]).collect();
        assert!(topics.len() > last, "topic counts must strictly increase");
        last = topics.len();
    }
}

#[test]
fn planted_synonym_groups_are_recovered() {
    let mut r = rng(31);
    let mut centers: Vec<Vec<f64>> = Vec::new();
    while centers.len() < 100 {
        let c: Vec<f64> = (0..8).map(|_| r.gen_range(0.0..2.0)).collect();
        if centers.iter().all(|o| distance(o, &c) > 0.4) {
            centers.push(c);
        }
    }
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (g, c) in centers.iter().enumerate() {
        for m in 0..5 {
            ids.push(format!("group{g} variant{m}"));
            rows.push(c.iter().map(|x| x + noise.sample(&mut r)).collect());
        }
    }
    let records: Vec<TagRecord> = ids
        .chunks(3)
        .enumerate()
        .map(|(i, tags)| TagRecord {
            id: format!("s{i:04}"),
            tags: tags.to_vec(),
        })
        .collect();
    let e = EmbeddingMatrix::new(ids, rows).unwrap();
    let catalog = build_tag_catalog(&filter_tags(records), &e, 0.15, 2).unwrap();
    let k = catalog.category_count();
    assert!((95..=105).contains(&k), "recovered {k} categories");
}

#[test]
fn meso_ratio_matches_recount() {
    let mut r = rng(41);
    let tags: Vec<String> = (0..30).map(|i| format!("skill{i}")).collect();
    let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, 0.0]).collect();
    let e = EmbeddingMatrix::new(tags.clone(), rows).unwrap();
    let samples: Vec<Sample> = (0..400)
        .map(|i| Sample {
            id: format!("s{i:04}"),
            instruction: format!("q{i}"),
            response: format!("a{i}"),
        })
        .collect();
    let corpus = Corpus::from_samples(samples).unwrap();
    let records: Vec<TagRecord> = (0..400)
        .map(|i| {
            let count = r.gen_range(1..4);
            TagRecord {
                id: format!("s{i:04}"),
                tags: tags.choose_multiple(&mut r, count).cloned().collect(),
            }
        })
        .collect();
    let tag_lists: HashMap<String, Vec<String>> = records.iter().map(|r| (r.id.clone(), r.tags.clone())).collect();
    let catalog = build_tag_catalog(&filter_tags(records), &e, 0.15, 2).unwrap();
    assert_eq!(catalog.category_count(), 30);
    let series = build_meso_series(&catalog, &corpus, Component::Instruction, 60, 4, 2).unwrap();
    let per_point = series.parameters["points"].as_array().unwrap();
    for (point, info) in series.points.iter().zip(per_point) {
        let ids: BTreeSet<&String> = point.sample_ids.iter().collect();
        assert_eq!(ids.len(), point.sample_ids.len());
        let distinct: BTreeSet<&String> = point.sample_ids.iter().flat_map(|id| &tag_lists[id]).collect();
        let instances: usize = point.sample_ids.iter().map(|id| tag_lists[id].len()).sum();
        let ratio = distinct.len() as f64 / instances as f64;
        assert_eq!(info["category_ratio"].as_f64().unwrap(), ratio);
    }
}

#[test]
fn tag_ingest_counts_a_thousand_lines() {
    let samples: Vec<Sample> = (0..1000)
        .map(|i| Sample {
            id: format!("s{i:04}"),
            instruction: format!("q{i}"),
            response: format!("a{i}"),
        })
        .collect();
    let corpus = Corpus::from_samples(samples).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tags.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    let (mut malformed, mut unknown, mut duplicate, mut good) = (0, 0, 0, 0);
    for i in 0..1000 {
        match i % 10 {
            0 => {
                writeln!(f, "{{not json").unwrap();
                malformed += 1;
            }
            1 => {
                writeln!(f, r#"{{"id": "x{i}", "tags": ["a"]}}"#).unwrap();
                unknown += 1;
            }
            2 if i > 100 => {
                writeln!(f, r#"{{"id": "s{:04}", "tags": ["again"]}}"#, i - 5).unwrap();
                duplicate += 1;
            }
            _ => {
                writeln!(f, r#"{{"id": "s{i:04}", "tags": ["Writing", {{"tag": "math", "explanation": "sums"}}]}}"#)
                    .unwrap();
                good += 1;
            }
        }
    }
    drop(f);
    let got = ingest_tags(&path, &corpus).unwrap();
    assert_eq!(got.lines, 1000);
    assert_eq!(got.malformed, malformed);
    assert_eq!(got.unknown_ids, unknown);
    assert_eq!(got.duplicate_ids, duplicate);
    assert_eq!(got.records.len(), good);
    assert_eq!(got.records[0].tags, ["Writing", "math"]);
}

#[test]
fn kurtosis_of_hand_moments() {
    // {1,2,2,3}: mean 2, m2 = 0.5, m4 = 0.5, so 0.5/0.25 - 3 = -1.
    assert!((kurtosis_of_counts(&[1, 2, 2, 3]).unwrap() + 1.0).abs() < 1e-12);
    let xs = [1.0, 1.0, 1.0, 1.0, 100.0];
    let mean = xs.iter().sum::<f64>() / 5.0;
    let m2 = xs.iter().map(|x: &f64| (x - mean).powi(2)).sum::<f64>() / 5.0;
    let m4 = xs.iter().map(|x: &f64| (x - mean).powi(4)).sum::<f64>() / 5.0;
    let got = kurtosis_of_counts(&[1, 1, 1, 1, 100]).unwrap();
    assert!((got - (m4 / (m2 * m2) - 3.0)).abs() < 1e-12);
    assert!(got > 0.0);
}
