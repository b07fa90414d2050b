//! Seeded randomness.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose 32-byte
//! seed is the SHA-256 of `(seed, domain, key)`. Streams are keyed by the
//! identity of what they serve (a class, a hypothesis) instead of by call
//! order, so results do not depend on iteration order or worker count.
//! Bounded integers are drawn with a local rejection sampler, which keeps the
//! output tied to the ChaCha8 byte stream only.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Name recorded in manifests for the generator behind every seeded draw.
pub const GENERATOR: &str = "chacha8 (rand_chacha 0.3), stream seed = sha256(seed_le64 || domain || 0x00 || key)";

pub fn stream(seed: u64, domain: &str, key: &[u8]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.update([0u8]);
    hasher.update(key);
    let digest = hasher.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

/// Uniform integer in `0..bound`.
pub fn below(rng: &mut impl RngCore, bound: usize) -> usize {
    assert!(bound > 0, "empty range");
    let bound = bound as u64;
    // Reject the top partial block so every residue is equally likely.
    let zone = u64::MAX - (u64::MAX % bound + 1) % bound;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return (v % bound) as usize;
        }
    }
}

/// Shuffles `items` in place (Fisher-Yates, from the back).
pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i + 1);
        items.swap(i, j);
    }
}

/// Draws `count` distinct positions out of `0..len`, in draw order.
pub fn sample_indices(rng: &mut impl RngCore, len: usize, count: usize) -> Vec<usize> {
    let count = count.min(len);
    let mut pool: Vec<usize> = (0..len).collect();
    for i in 0..count {
        let j = i + below(rng, len - i);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}
