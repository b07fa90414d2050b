//! Seeded workload generators for the benchmarks.

use divforge_core::{Corpus, EmbeddingMatrix, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};

/// Synthetic corpus whose responses mix narrow and broad vocabularies.
pub fn zipf_corpus(samples: usize, vocab: u64, seed: u64) -> Corpus {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..samples)
        .map(|i| {
            let breadth = 2f64.powf(r.gen_range(3.0..(vocab as f64).log2())) as u64;
            let zipf = Zipf::new(breadth.max(2), 1.1).unwrap();
            let len = r.gen_range(20..80);
            let words: Vec<String> = (0..len).map(|_| format!("w{:05}", zipf.sample(&mut r) as u64)).collect();
            Sample {
                id: format!("s{i:07}"),
                instruction: format!("task {}", i % 101),
                response: words.join(" "),
            }
        })
        .collect();
    Corpus::from_samples(samples).unwrap()
}

/// Gaussian blobs in `dim` dimensions with centers spread over a cube.
pub fn blob_matrix(blobs: usize, per_blob: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::with_capacity(blobs * per_blob);
    for _ in 0..blobs {
        let center: Vec<f64> = (0..dim).map(|_| r.gen_range(-40.0..40.0)).collect();
        for _ in 0..per_blob {
            rows.push(center.iter().map(|c| c + normal.sample(&mut r)).collect());
        }
    }
    let ids = (0..rows.len()).map(|i| format!("p{i:06}")).collect();
    EmbeddingMatrix::new(ids, rows).unwrap()
}

/// Short texts over a Zipf vocabulary.
pub fn texts(n: usize, vocab: u64, seed: u64) -> Vec<String> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let zipf = Zipf::new(vocab, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let len = r.gen_range(10..40);
            (0..len).map(|_| format!("v{}", zipf.sample(&mut r) as u64)).collect::<Vec<_>>().join(" ")
        })
        .collect()
}
