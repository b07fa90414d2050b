//! Diversity-controlled subset construction for instruction-response corpora.
//!
//! The crate builds fixed-size dataset series whose diversity is controlled at
//! three granularities:
//!
//! - macroscopic: number of semantic clusters over sample embeddings
//!   ([`macro_strategy`]),
//! - mesoscopic: number of normalized tag categories ([`meso_strategy`]),
//! - microscopic: number of distinct mid-frequency ("important") tokens
//!   ([`micro_strategy`]),
//!
//! and computes posterior diversity metrics over the resulting datasets
//! ([`metrics`]).

pub mod clustering;
pub mod corpus;
pub mod error;
pub mod macro_strategy;
pub mod meso_strategy;
pub mod metrics;
pub mod micro_strategy;
pub mod rng;
pub mod tokenization;

pub use clustering::{ClusterAssignment, EmbeddingMatrix};
pub use corpus::{
    uniform_select, Class, Component, Corpus, Sample, SeriesManifest, SeriesPoint, Strategy,
};
pub use error::{Error, Result};
pub use tokenization::{Band, BandThresholds, FrequencyTable, TokenSetIndex, TokenizerHandle};
