use std::cmp::Reverse;
use std::collections::BTreeSet;

use crate::tokenization::TokenSetIndex;

/// Work counters for one pruning run.
///
/// `token_updates` counts survivor-count decrements and `score_updates` counts
/// changes to a sample's exclusive-token count. Both are bounded by the number
/// of (sample, token) incidences in the index, independent of how many
/// samples are removed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PruneStats {
    pub removals: usize,
    pub token_updates: usize,
    pub score_updates: usize,
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    /// Surviving samples, ascending.
    pub survivors: Vec<u32>,
    /// Tokens still covered by the survivors, ascending.
    pub covered: Vec<u32>,
    /// Removed samples in removal order.
    pub removed: Vec<u32>,
    pub stats: PruneStats,
}

/// Incremental state of inverse greedy pruning over a full index.
///
/// For every token the pruner keeps the number of surviving holders and the
/// XOR of their indices; when the count drops to one, the XOR is the last
/// holder, whose exclusive-token count goes up by one. Removal candidates sit
/// in an ordered set keyed by (exclusive count desc, sample index asc).
#[derive(Debug, Clone)]
pub struct Pruner<'a> {
    index: &'a TokenSetIndex,
    alive: Vec<bool>,
    live: usize,
    holders_left: Vec<u32>,
    holder_xor: Vec<u32>,
    unique: Vec<u32>,
    queue: BTreeSet<(Reverse<u32>, u32)>,
    covered: usize,
    removed: Vec<u32>,
    stats: PruneStats,
}

impl<'a> Pruner<'a> {
    pub fn new(index: &'a TokenSetIndex) -> Self {
        let n = index.len();
        let mut holders_left = vec![0u32; index.token_count()];
        let mut holder_xor = vec![0u32; index.token_count()];
        for t in 0..index.token_count() as u32 {
            let holders = index.holders(t);
            holders_left[t as usize] = holders.len() as u32;
            holder_xor[t as usize] = holders.iter().fold(0, |acc, &d| acc ^ d);
        }
        let mut unique = vec![0u32; n];
        for t in 0..index.token_count() {
            if holders_left[t] == 1 {
                unique[holder_xor[t] as usize] += 1;
            }
        }
        let queue = (0..n as u32).map(|d| (Reverse(unique[d as usize]), d)).collect();
        let covered = holders_left.iter().filter(|&&c| c > 0).count();
        Self {
            index,
            alive: vec![true; n],
            live: n,
            holders_left,
            holder_xor,
            unique,
            queue,
            covered,
            removed: Vec::new(),
            stats: PruneStats::default(),
        }
    }

    /// Size of the token union over surviving samples.
    pub fn covered_len(&self) -> usize {
        self.covered
    }

    pub fn survivors_len(&self) -> usize {
        self.live
    }

    /// Number of tokens held by `sample` and by no other survivor.
    pub fn exclusive(&self, sample: u32) -> u32 {
        self.unique[sample as usize]
    }

    pub fn is_alive(&self, sample: u32) -> bool {
        self.alive[sample as usize]
    }

    /// Removes the survivor with the most exclusive tokens (smallest index on
    /// ties) and returns it.
    pub fn step(&mut self) -> Option<u32> {
        let (_, victim) = self.queue.pop_first()?;
        self.alive[victim as usize] = false;
        self.live -= 1;
        self.removed.push(victim);
        self.stats.removals += 1;
        for &t in self.index.set(victim) {
            let t = t as usize;
            self.holders_left[t] -= 1;
            self.holder_xor[t] ^= victim;
            self.stats.token_updates += 1;
            match self.holders_left[t] {
                0 => self.covered -= 1,
                1 => {
                    let last = self.holder_xor[t];
                    let old = self.unique[last as usize];
                    self.queue.remove(&(Reverse(old), last));
                    self.unique[last as usize] = old + 1;
                    self.queue.insert((Reverse(old + 1), last));
                    self.stats.score_updates += 1;
                }
                _ => {}
            }
        }
        Some(victim)
    }

    pub fn stats(&self) -> PruneStats {
        self.stats
    }

    pub fn removed(&self) -> &[u32] {
        &self.removed
    }

    pub fn survivors(&self) -> Vec<u32> {
        (0..self.alive.len() as u32).filter(|&d| self.alive[d as usize]).collect()
    }

    pub fn covered_tokens(&self) -> Vec<u32> {
        (0..self.holders_left.len() as u32)
            .filter(|&t| self.holders_left[t as usize] > 0)
            .collect()
    }

    pub fn finish(self) -> PruneOutcome {
        PruneOutcome {
            survivors: self.survivors(),
            covered: self.covered_tokens(),
            removed: self.removed,
            stats: self.stats,
        }
    }
}

/// Removes samples, most exclusive tokens first, until the surviving token
/// union has at most `target` tokens or no sample is left.
pub fn inverse_greedy_prune(index: &TokenSetIndex, target: usize) -> PruneOutcome {
    let mut pruner = Pruner::new(index);
    while pruner.covered_len() > target && pruner.step().is_some() {}
    pruner.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> TokenSetIndex {
        TokenSetIndex::from_sets([
            ("d1", vec!["1", "2"]),
            ("d2", vec!["2", "3"]),
            ("d3", vec!["4", "5"]),
        ])
    }

    #[test]
    fn removes_most_exclusive_first() {
        let idx = example();
        let out = inverse_greedy_prune(&idx, 3);
        assert_eq!(idx.ids_of(&out.removed), ["d3"]);
        assert_eq!(idx.ids_of(&out.survivors), ["d1", "d2"]);
        let covered: Vec<&str> = out.covered.iter().map(|&t| idx.token(t)).collect();
        assert_eq!(covered, ["1", "2", "3"]);
    }

    #[test]
    fn loose_target_removes_nothing() {
        let out = inverse_greedy_prune(&example(), 5);
        assert!(out.removed.is_empty());
        assert_eq!(out.survivors.len(), 3);
        assert_eq!(inverse_greedy_prune(&example(), 100).covered.len(), 5);
    }

    #[test]
    fn target_zero_empties_the_pool() {
        let out = inverse_greedy_prune(&example(), 0);
        assert!(out.survivors.is_empty());
        assert!(out.covered.is_empty());
        assert_eq!(out.stats.removals, 3);
    }

    #[test]
    fn ties_and_zero_exclusive_removals() {
        // Every token is shared: all exclusive counts are 0, so the smallest
        // id goes first, which then exposes exclusives in the others.
        let idx = TokenSetIndex::from_sets([
            ("a", vec!["x", "y"]),
            ("b", vec!["x", "y"]),
            ("c", vec!["y"]),
        ]);
        let mut p = Pruner::new(&idx);
        assert_eq!(p.step(), Some(0));
        assert_eq!(p.exclusive(1), 1);
        assert_eq!(p.step(), Some(1));
        assert_eq!(p.covered_len(), 1);
    }
}
