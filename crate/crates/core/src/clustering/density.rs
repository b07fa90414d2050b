use rayon::prelude::*;

use super::dbscan::{dbscan_raw, Sweep, UnionFind};
use super::{distance, ClusterAssignment, EmbeddingMatrix, NOISE};
use crate::error::{Error, Result};

/// Parameters for [`density_cluster_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityParams {
    /// Smallest group of points reported as a cluster.
    pub min_cluster_size: usize,
    /// Neighbourhood size for the core-point test; defaults to
    /// `min_cluster_size`.
    pub min_samples: Option<usize>,
    /// A cluster counts as real when the radius at which it is absorbed is
    /// at least this multiple of the radius at which it formed.
    pub persistence: f64,
}

impl DensityParams {
    pub fn new(min_cluster_size: usize) -> Self {
        Self {
            min_cluster_size,
            min_samples: None,
            persistence: 2.0,
        }
    }
}

/// How the radius for the final labelling was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    /// Radius used for the final labelling; `None` when nothing was stable.
    pub eps: Option<f64>,
    pub min_samples: usize,
    /// Clusters (size at least `min_cluster_size`) seen at any radius.
    pub lineages: usize,
    pub stable_lineages: usize,
    pub candidates: usize,
}

#[derive(Debug, Clone)]
struct Lineage {
    birth: f64,
    death: f64,
    children: bool,
}

/// Density clustering with a minimum cluster size and no fixed radius.
///
/// Builds the single-linkage hierarchy over mutual-reachability distances,
/// keeps the clusters that persist over a wide enough range of radii, picks
/// the radius at which the most of those are present at once, and labels
/// points with DBSCAN at that radius. Clusters that are not persistent
/// become noise, so structureless data yields no clusters. Ties are broken by
/// id, so results do not depend on row order.
pub fn density_cluster(embeddings: &EmbeddingMatrix, min_cluster_size: usize) -> Result<ClusterAssignment> {
    density_cluster_with(embeddings, &DensityParams::new(min_cluster_size)).map(|(a, _)| a)
}

pub fn density_cluster_with(
    embeddings: &EmbeddingMatrix,
    params: &DensityParams,
) -> Result<(ClusterAssignment, DensityReport)> {
    let mcs = params.min_cluster_size;
    if mcs < 2 {
        return Err(Error::precondition(format!("min_cluster_size must be at least 2, got {mcs}")));
    }
    if !(params.persistence.is_finite() && params.persistence > 1.0) {
        return Err(Error::precondition(format!(
            "persistence must be greater than 1, got {}",
            params.persistence
        )));
    }
    if let Some(order) = super::id_order(embeddings) {
        return super::by_id(embeddings, &order, |m| density_cluster_with(m, params));
    }
    let n = embeddings.len();
    let min_samples = params.min_samples.unwrap_or(mcs);
    if min_samples == 0 {
        return Err(Error::precondition("min_samples must be at least 1"));
    }
    let mut report = DensityReport {
        eps: None,
        min_samples,
        lineages: 0,
        stable_lineages: 0,
        candidates: 0,
    };
    let all_noise = || ClusterAssignment::canonical(embeddings.ids().to_vec(), &vec![NOISE; n]);
    if n < mcs {
        return Ok((all_noise(), report));
    }
    let m = min_samples.min(n);

    let core = core_distances(embeddings, m);
    let mut edges = mutual_reachability_mst(embeddings, &core);
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then((a.0, a.1).cmp(&(b.0, b.1))));

    let (lineages, _, _) = replay(n, &edges, mcs, f64::INFINITY);
    let stable: Vec<bool> = lineages.iter().map(|l| is_stable(l, params.persistence)).collect();
    report.lineages = lineages.len();
    report.stable_lineages = stable.iter().filter(|&&s| s).count();

    let mut candidates: Vec<f64> = edges.iter().map(|e| e.2).chain(core.iter().copied()).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    report.candidates = candidates.len();

    let mut events: Vec<(f64, i64)> = Vec::new();
    for (l, s) in lineages.iter().zip(&stable) {
        if *s {
            events.push((l.birth, 1));
            if l.death.is_finite() {
                events.push((l.death, -1));
            }
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut best, mut best_eps) = (0i64, None);
    let (mut alive, mut e) = (0i64, 0);
    for &c in &candidates {
        // alive at c: born at or before c, dead strictly after c
        while e < events.len() && events[e].0 <= c {
            alive += events[e].1;
            e += 1;
        }
        if alive > 0 && alive >= best {
            best = alive;
            best_eps = Some(c);
        }
    }
    let Some(eps) = best_eps else {
        return Ok((all_noise(), report));
    };
    report.eps = Some(eps);

    let radius = if eps > 0.0 { eps } else { 1e-12 };
    let run = dbscan_raw(embeddings, radius, m);
    let (_, mut uf, root_lineage) = replay(n, &edges, mcs, radius);
    let mut keep = std::collections::BTreeMap::new();
    for i in 0..n {
        if run.core[i] {
            let label = run.labels[i];
            keep.entry(label).or_insert_with(|| {
                let r = uf.find(i);
                root_lineage[r].is_some_and(|l| stable[l])
            });
        }
    }
    let raw: Vec<i64> = run
        .labels
        .iter()
        .map(|&l| if l != NOISE && keep[&l] { l } else { NOISE })
        .collect();
    Ok((ClusterAssignment::canonical(embeddings.ids().to_vec(), &raw), report))
}

fn is_stable(l: &Lineage, persistence: f64) -> bool {
    // The lineage that never ends spans the whole data set; like the
    // default HDBSCAN setting it is not a cluster, unless it formed at zero
    // radius out of coincident points.
    if l.death.is_infinite() {
        return !l.children && l.birth <= 0.0;
    }
    if l.birth <= 0.0 {
        return l.death > 0.0;
    }
    l.death / l.birth >= persistence
}

/// Distance from each point to its `m`-th nearest point, itself included.
fn core_distances(em: &EmbeddingMatrix, m: usize) -> Vec<f64> {
    let sweep = Sweep::new(em);
    (0..em.len())
        .into_par_iter()
        .map(|i| sweep.kth_distance(i, m))
        .collect()
}

/// Prim's algorithm over the complete graph weighted by
/// `max(core[a], core[b], dist(a, b))`. Ties go to the lowest index.
fn mutual_reachability_mst(em: &EmbeddingMatrix, core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = em.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut cur = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let row = em.row(cur);
        let cc = core[cur];
        let chunk = 4096;
        let next = best
            .par_chunks_mut(chunk)
            .zip(parent.par_chunks_mut(chunk))
            .enumerate()
            .map(|(c, (bs, ps))| {
                let mut local: Option<(f64, usize)> = None;
                for (k, (b, p)) in bs.iter_mut().zip(ps.iter_mut()).enumerate() {
                    let j = c * chunk + k;
                    if in_tree[j] {
                        continue;
                    }
                    let w = distance(row, em.row(j)).max(cc).max(core[j]);
                    if w < *b {
                        *b = w;
                        *p = cur;
                    }
                    if local.is_none_or(|(lb, _)| *b < lb) {
                        local = Some((*b, j));
                    }
                }
                local
            })
            .reduce(
                || None,
                |a, b| match (a, b) {
                    (Some(x), Some(y)) => Some(if y.0 < x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x }),
                    (x, None) => x,
                    (None, y) => y,
                },
            );
        let (w, j) = next.expect("unvisited point remains");
        in_tree[j] = true;
        edges.push((parent[j].min(j), parent[j].max(j), w));
        cur = j;
    }
    edges
}

/// Kruskal replay of the sorted tree edges with weight at most `upto`.
///
/// A lineage starts when a component first reaches `mcs` points, or when two
/// lineages merge (both end there and a new one with children starts).
fn replay(
    n: usize,
    edges: &[(usize, usize, f64)],
    mcs: usize,
    upto: f64,
) -> (Vec<Lineage>, UnionFind, Vec<Option<usize>>) {
    let mut uf = UnionFind::new(n);
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut lineages: Vec<Lineage> = Vec::new();
    for &(a, b, w) in edges {
        if w > upto {
            break;
        }
        let (ra, rb) = (uf.find(a), uf.find(b));
        let (la, lb) = (owner[ra], owner[rb]);
        let r = uf.union(ra, rb);
        owner[r] = match (la, lb) {
            (Some(x), Some(y)) => {
                lineages[x].death = w;
                lineages[y].death = w;
                lineages.push(Lineage { birth: w, death: f64::INFINITY, children: true });
                Some(lineages.len() - 1)
            }
            (Some(x), None) | (None, Some(x)) => Some(x),
            (None, None) if uf.size_of(r) >= mcs => {
                lineages.push(Lineage { birth: w, death: f64::INFINITY, children: false });
                Some(lineages.len() - 1)
            }
            (None, None) => None,
        };
    }
    (lineages, uf, owner)
}
