//! Generators and brute-force reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use divforge_core::{Corpus, EmbeddingMatrix, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random token-set instance: ids sort in index order, tokens in token order.
pub fn random_sets(r: &mut impl Rng, max_samples: usize, max_tokens: usize) -> Vec<(String, Vec<String>)> {
    let n = r.gen_range(1..=max_samples);
    let vocab = r.gen_range(1..=max_tokens);
    let density = r.gen_range(0.02..0.3);
    (0..n)
        .map(|i| {
            let set: Vec<String> = (0..vocab)
                .filter(|_| r.gen_bool(density))
                .map(|t| format!("t{t:03}"))
                .collect();
            (format!("s{i:03}"), set)
        })
        .collect()
}

/// Token sets as indices, using the same ordering the index assigns.
pub fn as_indices(sets: &[(String, Vec<String>)]) -> (Vec<Vec<u32>>, usize) {
    let vocab: BTreeSet<&str> = sets.iter().flat_map(|(_, s)| s.iter().map(String::as_str)).collect();
    let ids: HashMap<&str, u32> = vocab.iter().enumerate().map(|(i, t)| (*t, i as u32)).collect();
    let out = sets
        .iter()
        .map(|(_, s)| {
            let mut v: Vec<u32> = s.iter().map(|t| ids[t.as_str()]).collect();
            v.sort_unstable();
            v
        })
        .collect();
    (out, vocab.len())
}

fn union_of(sets: &[Vec<u32>], alive: &[bool]) -> BTreeSet<u32> {
    sets.iter()
        .zip(alive)
        .filter(|(_, &a)| a)
        .flat_map(|(s, _)| s.iter().copied())
        .collect()
}

/// Inverse greedy pruning by full recomputation at every step.
pub fn oracle_prune(sets: &[Vec<u32>], target: usize) -> Vec<u32> {
    let mut alive = vec![true; sets.len()];
    let mut removed = Vec::new();
    while union_of(sets, &alive).len() > target && alive.iter().any(|&a| a) {
        let mut best: Option<(usize, usize)> = None;
        for d in 0..sets.len() {
            if !alive[d] {
                continue;
            }
            let unique = sets[d]
                .iter()
                .filter(|t| !(0..sets.len()).any(|o| o != d && alive[o] && sets[o].contains(t)))
                .count();
            if best.is_none_or(|(u, _)| unique > u) {
                best = Some((unique, d));
            }
        }
        let (_, d) = best.unwrap();
        alive[d] = false;
        removed.push(d as u32);
    }
    removed
}

/// Literal simulation of token-aware sampling. Returns the trace as
/// `(coverage phase?, admitted samples)`.
pub fn oracle_sample(
    sets: &[Vec<u32>],
    pool: &[u32],
    candidates: &[u32],
    n: usize,
    alpha: f64,
    batch: usize,
) -> Vec<(bool, Vec<u32>)> {
    let cand: BTreeSet<u32> = candidates.iter().copied().collect();
    let mut counts: BTreeMap<u32, u32> = cand.iter().map(|&t| (t, 0)).collect();
    let mut pool: Vec<u32> = pool.to_vec();
    pool.sort_unstable();
    pool.dedup();
    let mut chosen: Vec<u32> = Vec::new();
    let mut trace = Vec::new();
    let restricted = |d: u32| -> Vec<u32> { sets[d as usize].iter().copied().filter(|t| cand.contains(t)).collect() };

    while counts.values().any(|&c| c == 0) && chosen.len() < n {
        let mut best: Option<(usize, u32)> = None;
        for &d in &pool {
            if chosen.contains(&d) {
                continue;
            }
            let gain = restricted(d).iter().filter(|t| counts[t] == 0).count();
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, d));
            }
        }
        let Some((_, d)) = best else { break };
        for t in restricted(d) {
            *counts.get_mut(&t).unwrap() += 1;
        }
        chosen.push(d);
        trace.push((true, vec![d]));
    }
    loop {
        let rest: Vec<u32> = pool.iter().copied().filter(|d| !chosen.contains(d)).collect();
        if chosen.len() >= n || rest.is_empty() {
            break;
        }
        let mut scored: Vec<(f64, u32)> = rest
            .iter()
            .map(|&d| {
                let s: f64 = restricted(d).iter().map(|t| 1.0 / (counts[t] as f64 + alpha)).sum();
                (s, d)
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let k = batch.min(n - chosen.len()).min(scored.len());
        let picked: Vec<u32> = scored[..k].iter().map(|p| p.1).collect();
        for &d in &picked {
            for t in restricted(d) {
                *counts.get_mut(&t).unwrap() += 1;
            }
            chosen.push(d);
        }
        trace.push((false, picked));
    }
    trace
}

pub const NOISE: i64 = -1;

/// Textbook DBSCAN: breadth-first expansion over core points, then every
/// border point joins the cluster of its lowest-index core neighbour.
pub fn oracle_dbscan(points: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<i64> {
    let n = points.len();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(&points[i], &points[j]) <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|v| v.len() >= min_samples).collect();
    let mut labels = vec![NOISE; n];
    let mut next = 0;
    for start in 0..n {
        if !core[start] || labels[start] != NOISE {
            continue;
        }
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if core[q] && labels[q] == NOISE {
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    for i in 0..n {
        if !core[i] {
            if let Some(&j) = neighbours[i].iter().find(|&&j| core[j]) {
                labels[i] = labels[j];
            }
        }
    }
    labels
}

/// True when two labelings agree up to a renaming of clusters (noise must
/// match exactly).
pub fn same_partition(a: &[i64], b: &[i64]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x == NOISE) != (y == NOISE) {
            return false;
        }
        if x == NOISE {
            continue;
        }
        if *fwd.entry(x).or_insert(y) != y || *back.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

/// Isotropic Gaussian blobs with unit standard deviation. Returns the points
/// and the generating blob of each.
pub fn blobs(r: &mut impl Rng, centers: &[Vec<f64>], per_blob: usize) -> (Vec<Vec<f64>>, Vec<i64>) {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for (b, c) in centers.iter().enumerate() {
        for _ in 0..per_blob {
            points.push(c.iter().map(|x| x + normal.sample(r)).collect());
            truth.push(b as i64);
        }
    }
    (points, truth)
}

pub fn matrix(points: &[Vec<f64>]) -> EmbeddingMatrix {
    let ids = (0..points.len()).map(|i| format!("p{i:05}")).collect();
    EmbeddingMatrix::new(ids, points.to_vec()).unwrap()
}

/// Corpus whose responses are drawn from vocabularies of varying breadth:
/// each sample picks a breadth, then draws words Zipf-distributed over the
/// first `breadth` ranks of a shared vocabulary. Breadths are log-uniform
/// between 8 and `2^max_log2`.
pub fn breadth_corpus(n: usize, max_log2: f64, seed: u64) -> Corpus {
    let mut r = rng(seed);
    let samples = (0..n)
        .map(|i| {
            let breadth: f64 = 2f64.powf(r.gen_range(3.0..max_log2));
            let zipf = Zipf::new(breadth as u64, 1.1).unwrap();
            let len = r.gen_range(20..80);
            let words: Vec<String> = (0..len).map(|_| format!("w{:05}", zipf.sample(&mut r) as u64)).collect();
            Sample {
                id: format!("s{i:06}"),
                instruction: format!("task {} about w{:05}", i % 97, r.gen_range(1..500)),
                response: words.join(" "),
            }
        })
        .collect();
    Corpus::from_samples(samples).unwrap()
}

/// Whitespace-token counts of a text collection.
pub fn word_counts(texts: &[&str]) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for t in texts {
        for w in t.split_whitespace() {
            *counts.entry(w.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU of one hypothesis against a reference set, computed directly
/// from n-gram multisets.
pub fn oracle_bleu(hyp: &[&str], refs: &[Vec<&str>], max_n: usize, eps: f64) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let grams = |toks: &[&str], n: usize| -> HashMap<Vec<String>, usize> {
        let mut m = HashMap::new();
        if toks.len() >= n {
            for w in toks.windows(n) {
                *m.entry(w.iter().map(|s| s.to_string()).collect()).or_insert(0) += 1;
            }
        }
        m
    };
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let h = grams(hyp, n);
        let total: usize = h.values().sum();
        let ref_grams: Vec<_> = refs.iter().map(|r| grams(r, n)).collect();
        let matched: usize = h
            .iter()
            .map(|(g, &c)| c.min(ref_grams.iter().map(|m| m.get(g).copied().unwrap_or(0)).max().unwrap_or(0)))
            .sum();
        log_sum += ((matched as f64 + eps) / (total as f64 + eps)).ln();
    }
    let len = hyp.len();
    let closest = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&l| (l.abs_diff(len), l))
        .unwrap();
    let bp = if len > closest { 1.0 } else { (1.0 - closest as f64 / len as f64).exp() };
    bp * (log_sum / max_n as f64).exp()
}

pub fn oracle_self_bleu(texts: &[&str], max_n: usize, eps: f64) -> f64 {
    let toks: Vec<Vec<&str>> = texts.iter().map(|t| t.split_whitespace().collect()).collect();
    let total: f64 = (0..toks.len())
        .map(|i| {
            let refs: Vec<Vec<&str>> =
                toks.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, t)| t.clone()).collect();
            oracle_bleu(&toks[i], &refs, max_n, eps)
        })
        .sum();
    total / texts.len() as f64
}

/// Random short texts over a small vocabulary.
pub fn random_texts(r: &mut impl Rng, n: usize, vocab: usize, max_len: usize) -> Vec<String> {
    (0..n)
        .map(|_| {
            let len = r.gen_range(1..=max_len);
            (0..len).map(|_| format!("v{}", r.gen_range(0..vocab))).collect::<Vec<_>>().join(" ")
        })
        .collect()
}
