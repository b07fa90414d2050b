//! Token-level diversity control.
//!
//! A dataset's microscopic diversity is the number of distinct important
//! (mid-band) tokens it contains. Series are built in two stages: inverse
//! greedy pruning shrinks the candidate pool until its important-token union
//! reaches a target size, then token-aware sampling picks a fixed number of
//! samples from the pool, first maximizing coverage of the surviving tokens
//! and then favouring samples whose tokens are least represented so far.

mod prune;
mod sample;
mod series;

pub use prune::{inverse_greedy_prune, PruneOutcome, PruneStats, Pruner};
pub use sample::{
    min_coverage_select, token_aware_sample, Admission, Phase, SampleOutcome, SamplingParams,
};
pub use series::{build_micro_series, MicroSeriesParams};
