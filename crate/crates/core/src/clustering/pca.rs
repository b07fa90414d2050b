use nalgebra::{DMatrix, SymmetricEigen};

use super::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Result of projecting onto the leading principal components.
#[derive(Debug, Clone)]
pub struct PcaProjection {
    /// Projected coordinates, same ids and row order as the input.
    pub matrix: EmbeddingMatrix,
    /// Unit principal directions, one per output coordinate.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Variance along each kept direction (sample covariance, `n - 1`).
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    /// True when fewer than `components` directions carry variance.
    pub rank_deficient: bool,
}

impl PcaProjection {
    /// Maps projected coordinates back into the input space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, dir) in coords.iter().zip(&self.components) {
            for (o, v) in out.iter_mut().zip(dir) {
                *o += c * v;
            }
        }
        out
    }
}

/// Projects `embeddings` onto its top `components` principal directions.
///
/// Each direction is signed so that its largest-magnitude coordinate is
/// positive (first such coordinate on ties), which makes the output
/// deterministic for a given input.
pub fn pca_reduce(embeddings: &EmbeddingMatrix, components: usize) -> Result<PcaProjection> {
    let n = embeddings.len();
    let d = embeddings.dim();
    if n < 2 {
        return Err(Error::precondition(format!("PCA needs at least 2 rows, got {n}")));
    }
    if components == 0 || components > d {
        return Err(Error::precondition(format!(
            "PCA components must be in 1..={d}, got {components}"
        )));
    }
    let mut mean = vec![0.0; d];
    for row in embeddings.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, d, |i, j| embeddings.row(i)[j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = 1e-12 * top.max(1.0) * d as f64;
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > tol).count();
    let rank_deficient = rank < components;
    if rank_deficient {
        log::warn!("PCA: data has rank {rank}, fewer than the {components} requested components");
    }

    let mut dirs = Vec::with_capacity(components);
    let mut explained = Vec::with_capacity(components);
    for &i in order.iter().take(components) {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let mut pivot = 0;
        for (k, x) in v.iter().enumerate() {
            if x.abs() > v[pivot].abs() {
                pivot = k;
            }
        }
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        explained.push(eig.eigenvalues[i].max(0.0));
        dirs.push(v);
    }

    let basis = DMatrix::from_fn(d, components, |r, c| dirs[c][r]);
    let projected = centered * basis;
    let mut data = Vec::with_capacity(n * components);
    for i in 0..n {
        data.extend(projected.row(i).iter());
    }
    let matrix = EmbeddingMatrix::from_flat(embeddings.ids().to_vec(), components, data)?;
    Ok(PcaProjection {
        matrix,
        components: dirs,
        mean,
        explained_variance: explained,
        total_variance,
        rank_deficient,
    })
}
