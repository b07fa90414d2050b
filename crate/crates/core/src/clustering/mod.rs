//! Geometry shared by the macroscopic and mesoscopic strategies: embedding
//! matrices, PCA, DBSCAN and minimum-size density clustering. Distances are
//! Euclidean throughout.

mod dbscan;
mod density;
mod embedding;
mod pca;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use dbscan::dbscan;
pub use density::{density_cluster, density_cluster_with, DensityParams, DensityReport};
pub use embedding::EmbeddingMatrix;
pub use pca::{pca_reduce, PcaProjection};

/// Row order that sorts `embeddings` by id, or `None` when it already is.
pub(crate) fn id_order(embeddings: &EmbeddingMatrix) -> Option<Vec<usize>> {
    let ids = embeddings.ids();
    if ids.windows(2).all(|w| w[0] <= w[1]) {
        return None;
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    Some(order)
}

/// Runs `cluster` on the rows sorted by id and maps its labels back onto the
/// input rows, so tie-breaking follows ids rather than row positions.
pub(crate) fn by_id<R>(
    embeddings: &EmbeddingMatrix,
    order: &[usize],
    cluster: impl FnOnce(&EmbeddingMatrix) -> Result<(ClusterAssignment, R)>,
) -> Result<(ClusterAssignment, R)> {
    let ids: Vec<&str> = order.iter().map(|&i| embeddings.ids()[i].as_str()).collect();
    let (sorted, extra) = cluster(&embeddings.select(&ids)?)?;
    let mut raw = vec![NOISE; order.len()];
    for (k, &row) in order.iter().enumerate() {
        raw[row] = sorted.labels[k];
    }
    Ok((ClusterAssignment::canonical(embeddings.ids().to_vec(), &raw), extra))
}

/// Label given to points that belong to no cluster.
pub const NOISE: i64 = -1;

/// Cluster labels aligned with the rows of an [`EmbeddingMatrix`].
///
/// Non-noise labels are `0..k`, numbered by the smallest row index in each
/// cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub ids: Vec<String>,
    pub labels: Vec<i64>,
    pub k: usize,
}

impl ClusterAssignment {
    /// Renumbers arbitrary labels (negative = noise) to `0..k` by first
    /// appearance.
    pub(crate) fn canonical(ids: Vec<String>, raw: &[i64]) -> Self {
        let mut map = BTreeMap::new();
        let labels: Vec<i64> = raw
            .iter()
            .map(|&l| {
                if l < 0 {
                    NOISE
                } else {
                    let next = map.len() as i64;
                    *map.entry(l).or_insert(next)
                }
            })
            .collect();
        Self {
            ids,
            k: map.len(),
            labels,
        }
    }

    pub fn label_of(&self, id: &str) -> Option<i64> {
        self.ids.iter().position(|x| x == id).map(|i| self.labels[i])
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Member ids per non-noise cluster, in row order.
    pub fn clusters(&self) -> BTreeMap<i64, Vec<String>> {
        let mut out: BTreeMap<i64, Vec<String>> = BTreeMap::new();
        for (id, &l) in self.ids.iter().zip(&self.labels) {
            if l != NOISE {
                out.entry(l).or_default().push(id.clone());
            }
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }
}

/// Euclidean distance between two rows.
#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
