use rayon::prelude::*;

use super::{distance, ClusterAssignment, EmbeddingMatrix, NOISE};
use crate::error::{Error, Result};

/// Neighbour search by sweeping along the highest-variance axis. A projection
/// onto one axis never exceeds the full distance, so only points within
/// `eps` on that axis need to be checked.
pub(crate) struct Sweep<'a> {
    m: &'a EmbeddingMatrix,
    order: Vec<usize>,
    rank: Vec<usize>,
    key: Vec<f64>,
}

impl<'a> Sweep<'a> {
    pub(crate) fn new(m: &'a EmbeddingMatrix) -> Self {
        let n = m.len();
        let d = m.dim();
        let axis = (0..d)
            .map(|j| {
                let mean = m.rows().map(|r| r[j]).sum::<f64>() / n.max(1) as f64;
                m.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>()
            })
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, v)| if v > best.1 { (j, v) } else { best })
            .0;
        let key: Vec<f64> = (0..n).map(|i| if d == 0 { 0.0 } else { m.row(i)[axis] }).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)));
        let mut rank = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        Self { m, order, rank, key }
    }

    /// Distance from row `i` to its `k`-th nearest row, itself included.
    pub(crate) fn kth_distance(&self, i: usize, k: usize) -> f64 {
        let row = self.m.row(i);
        let r = self.rank[i];
        let n = self.order.len();
        let mut best: std::collections::BinaryHeap<OrdF64> = std::collections::BinaryHeap::new();
        let (mut up, mut down) = (r, r);
        loop {
            let gap_up = (up < n).then(|| self.key[self.order[up]] - self.key[i]);
            let gap_down = (down > 0).then(|| self.key[i] - self.key[self.order[down - 1]]);
            let take_up = match (gap_up, gap_down) {
                (None, None) => break,
                (Some(u), Some(d)) => u <= d,
                (Some(_), None) => true,
                (None, Some(_)) => false,
            };
            let gap = if take_up { gap_up } else { gap_down }.unwrap_or(0.0);
            if best.len() == k && gap > best.peek().map_or(f64::INFINITY, |b| b.0) {
                break;
            }
            let j = if take_up {
                up += 1;
                self.order[up - 1]
            } else {
                down -= 1;
                self.order[down]
            };
            let d = distance(row, self.m.row(j));
            if best.len() < k {
                best.push(OrdF64(d));
            } else if d < best.peek().map_or(f64::INFINITY, |b| b.0) {
                best.pop();
                best.push(OrdF64(d));
            }
        }
        best.peek().map_or(f64::INFINITY, |b| b.0)
    }

    /// Calls `f(j)` for every `j` (including `i`) within `eps` of row `i`.
    pub(crate) fn for_each_within(&self, i: usize, eps: f64, mut f: impl FnMut(usize)) {
        let row = self.m.row(i);
        let r = self.rank[i];
        for &j in self.order[r..].iter() {
            if self.key[j] - self.key[i] > eps {
                break;
            }
            if distance(row, self.m.row(j)) <= eps {
                f(j);
            }
        }
        for &j in self.order[..r].iter().rev() {
            if self.key[i] - self.key[j] > eps {
                break;
            }
            if distance(row, self.m.row(j)) <= eps {
                f(j);
            }
        }
    }
}

#[derive(PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Joins the sets holding `a` and `b`; returns the new root.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> usize {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        ra
    }

    pub(crate) fn size_of(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

/// Raw DBSCAN labels plus the core flags and union-find over cores.
pub(crate) struct DbscanRun {
    pub labels: Vec<i64>,
    pub core: Vec<bool>,
}

pub(crate) fn dbscan_raw(m: &EmbeddingMatrix, eps: f64, min_samples: usize) -> DbscanRun {
    let n = m.len();
    let sweep = Sweep::new(m);
    let neighbours: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut v = Vec::new();
            sweep.for_each_within(i, eps, |j| v.push(j));
            v
        })
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|v| v.len() >= min_samples).collect();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        if core[i] {
            for &j in &neighbours[i] {
                if j > i && core[j] {
                    uf.union(i, j);
                }
            }
        }
    }
    let mut root_label = vec![NOISE; n];
    let mut labels = vec![NOISE; n];
    let mut next = 0;
    for i in 0..n {
        if core[i] {
            let r = uf.find(i);
            if root_label[r] == NOISE {
                root_label[r] = next;
                next += 1;
            }
            labels[i] = root_label[r];
        }
    }
    for i in 0..n {
        if !core[i] {
            if let Some(&j) = neighbours[i].iter().filter(|&&j| core[j]).min() {
                labels[i] = labels[j];
            }
        }
    }
    DbscanRun { labels, core }
}

/// Density-based clustering with a fixed radius.
///
/// A point is a core point when at least `min_samples` points, itself
/// included, lie within `eps`. Cores within `eps` of each other share a
/// cluster; a non-core point joins the cluster of the core neighbour with
/// the smallest id, or is noise. Results do not depend on row order.
pub fn dbscan(embeddings: &EmbeddingMatrix, eps: f64, min_samples: usize) -> Result<ClusterAssignment> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::precondition(format!("dbscan eps must be positive, got {eps}")));
    }
    if min_samples == 0 {
        return Err(Error::precondition("dbscan min_samples must be at least 1"));
    }
    if let Some(order) = super::id_order(embeddings) {
        return super::by_id(embeddings, &order, |m| Ok((dbscan(m, eps, min_samples)?, ()))).map(|(a, _)| a);
    }
    let run = dbscan_raw(embeddings, eps, min_samples);
    Ok(ClusterAssignment::canonical(embeddings.ids().to_vec(), &run.labels))
}
