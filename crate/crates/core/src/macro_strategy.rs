//! Topic-level diversity: cluster sample embeddings and vary how many
//! clusters a fixed-size dataset is drawn from.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::clustering::{density_cluster_with, pca_reduce, ClusterAssignment, DensityParams, EmbeddingMatrix};
use crate::corpus::manifest_support::{linear_targets, percent};
use crate::corpus::{select_balanced, Class, Component, Corpus, SeriesManifest, SeriesPoint, Strategy};
use crate::error::{Error, Result};

/// Number of principal components the embeddings are reduced to before
/// clustering.
pub const REDUCED_DIM: usize = 5;

/// Topic clusters over the samples of a corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicModel {
    /// One label per corpus sample, in corpus order; `-1` is noise.
    pub assignment: ClusterAssignment,
    pub component: Component,
    pub embedding_fingerprint: String,
    pub min_cluster_size: usize,
    pub reduced_dim: usize,
    /// Share of total variance kept by the reduction.
    pub explained_variance_ratio: f64,
    /// Radius chosen by density clustering, if any cluster was found.
    pub density_eps: Option<f64>,
}

impl TopicModel {
    /// Non-noise clusters ordered by descending size, then cluster id.
    pub fn classes(&self) -> Vec<Class> {
        let mut classes: Vec<Class> = self
            .assignment
            .clusters()
            .into_iter()
            .map(|(id, members)| Class::new(id as u64, members))
            .collect();
        classes.sort_by(|a, b| b.members.len().cmp(&a.members.len()).then(a.id.cmp(&b.id)));
        classes
    }

    pub fn pooled(&self) -> usize {
        self.assignment.ids.len() - self.assignment.noise_count()
    }
}

/// Reduces `embeddings` to [`REDUCED_DIM`] principal components and runs
/// density clustering. Every corpus sample must have an embedding; extra
/// embedding rows are ignored.
pub fn build_topic_model(
    corpus: &Corpus,
    component: Component,
    embeddings: &EmbeddingMatrix,
    min_cluster_size: usize,
) -> Result<TopicModel> {
    let ids: Vec<&str> = corpus.samples().iter().map(|s| s.id.as_str()).collect();
    let rows = embeddings.select(&ids)?;
    if embeddings.len() > rows.len() {
        log::warn!(
            "{} embedding rows have no corpus sample and are ignored",
            embeddings.len() - rows.len()
        );
    }
    let dim = REDUCED_DIM.min(rows.dim());
    let projection = pca_reduce(&rows, dim)?;
    let explained = if projection.total_variance > 0.0 {
        projection.explained_variance.iter().sum::<f64>() / projection.total_variance
    } else {
        1.0
    };
    let (assignment, report) = density_cluster_with(&projection.matrix, &DensityParams::new(min_cluster_size))?;
    log::info!(
        "topic model: {} clusters, {} noise samples",
        assignment.k,
        assignment.noise_count()
    );
    Ok(TopicModel {
        assignment,
        component,
        embedding_fingerprint: rows.fingerprint(),
        min_cluster_size,
        reduced_dim: dim,
        explained_variance_ratio: explained,
        density_eps: report.eps,
    })
}

/// Builds `points` datasets of `size` samples drawn evenly from the `k`
/// largest topic clusters, with `k` spaced linearly from the fewest clusters
/// that can supply `size` samples up to all clusters.
pub fn build_macro_series(model: &TopicModel, size: usize, points: usize, seed: u64) -> Result<SeriesManifest> {
    if points < 2 {
        return Err(Error::precondition("a series needs at least 2 points"));
    }
    let classes = model.classes();
    let pooled = model.pooled();
    if size == 0 || size > pooled {
        return Err(Error::Insufficient {
            needed: size,
            available: pooled,
        });
    }
    let k_max = classes.len();
    if k_max < 2 {
        return Err(Error::DegenerateSeries(format!(
            "macro series needs at least 2 topic clusters, found {k_max}"
        )));
    }
    let mut running = 0;
    let k_min = classes
        .iter()
        .position(|c| {
            running += c.members.len();
            running >= size
        })
        .map(|i| i + 1)
        .expect("pooled size covers the request");
    if k_min == k_max {
        return Err(Error::DegenerateSeries(format!(
            "every feasible cluster count equals {k_max}; no range to span"
        )));
    }

    let targets = linear_targets(k_min, k_max, points);
    let mut series = Vec::with_capacity(points);
    let mut counts = Vec::with_capacity(points);
    for &k in &targets {
        let sel = select_balanced(&classes[..k], size, seed)?;
        counts.push(json!(sel.per_class.iter().map(|(id, c)| json!([id, c])).collect::<Vec<_>>()));
        series.push(SeriesPoint {
            diversity_value: k as u64,
            diversity_percent: percent(k as f64, k_min as f64, k_max as f64),
            sample_ids: sel.ids,
        });
    }

    let mut parameters = BTreeMap::new();
    parameters.insert("dimension_reduction".into(), json!("pca"));
    parameters.insert("dimension_reduction_note".into(), json!("PCA replaces UMAP: deterministic linear projection"));
    parameters.insert("reduced_dim".into(), json!(model.reduced_dim));
    parameters.insert("explained_variance_ratio".into(), json!(model.explained_variance_ratio));
    parameters.insert("clustering".into(), json!("density_cluster"));
    parameters.insert("min_cluster_size".into(), json!(model.min_cluster_size));
    parameters.insert("density_eps".into(), json!(model.density_eps));
    parameters.insert("embedding_fingerprint".into(), json!(model.embedding_fingerprint));
    parameters.insert("cluster_count".into(), json!(k_max));
    parameters.insert("noise_samples".into(), json!(model.assignment.noise_count()));
    parameters.insert(
        "cluster_order".into(),
        json!(classes.iter().map(|c| c.id).collect::<Vec<_>>()),
    );
    parameters.insert("cluster_order_rule".into(), json!("descending size, then cluster id"));
    parameters.insert("k_min".into(), json!(k_min));
    parameters.insert("k_max".into(), json!(k_max));
    parameters.insert("target_schedule".into(), json!("linear"));
    parameters.insert("targets".into(), json!(targets));
    parameters.insert("per_point_cluster_counts".into(), json!(counts));

    Ok(SeriesManifest {
        strategy: Strategy::Macro,
        component: model.component,
        size,
        points: series,
        seed,
        parameters,
    })
}
