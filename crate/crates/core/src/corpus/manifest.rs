use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{Component, Corpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Macro,
    Meso,
    Micro,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Macro => "macro",
            Strategy::Meso => "meso",
            Strategy::Micro => "micro",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Strategy::Macro),
            "meso" => Ok(Strategy::Meso),
            "micro" => Ok(Strategy::Micro),
            other => Err(Error::precondition(format!(
                "unknown strategy {other:?} (expected macro, meso or micro)"
            ))),
        }
    }
}

/// One dataset of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    /// Count of topic / tag-category / important-token types the point
    /// realizes.
    pub diversity_value: u64,
    pub diversity_percent: f64,
    /// Sorted ascending.
    pub sample_ids: Vec<String>,
}

/// Reproducibility record of one diversity series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesManifest {
    pub strategy: Strategy,
    pub component: Component,
    pub size: usize,
    pub points: Vec<SeriesPoint>,
    pub seed: u64,
    pub parameters: BTreeMap<String, Value>,
}

impl SeriesManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        serde_json::from_str(raw).map_err(|e| Error::format("series manifest", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    /// Checks the structural invariants: every point holds exactly `size`
    /// distinct ids from `corpus`; percentages are anchored at 0 and 100 and
    /// never decrease.
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if p.sample_ids.len() != self.size {
                return Err(Error::precondition(format!(
                    "point {i} holds {} ids, expected {}",
                    p.sample_ids.len(),
                    self.size
                )));
            }
            let distinct: HashSet<&String> = p.sample_ids.iter().collect();
            if distinct.len() != p.sample_ids.len() {
                return Err(Error::precondition(format!("point {i} repeats a sample id")));
            }
            let missing: Vec<String> =
                p.sample_ids.iter().filter(|id| !corpus.contains(id)).cloned().collect();
            if !missing.is_empty() {
                return Err(Error::MissingIds {
                    what: "corpus",
                    missing,
                });
            }
        }
        if let (Some(first), Some(last)) = (self.points.first(), self.points.last()) {
            if first.diversity_percent != 0.0 || last.diversity_percent != 100.0 {
                return Err(Error::precondition("series is not anchored at 0% and 100%"));
            }
        }
        if self
            .points
            .windows(2)
            .any(|w| w[1].diversity_percent < w[0].diversity_percent)
        {
            return Err(Error::precondition("diversity percentages decrease along the series"));
        }
        Ok(())
    }
}

/// `100 * (value - lo) / (hi - lo)`, with the endpoints pinned exactly.
pub(crate) fn percent(value: f64, lo: f64, hi: f64) -> f64 {
    if value == lo {
        0.0
    } else if value == hi {
        100.0
    } else {
        100.0 * (value - lo) / (hi - lo)
    }
}

/// `count` integer targets spread linearly over `[lo, hi]`, endpoints exact.
pub(crate) fn linear_targets(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    match count {
        0 => Vec::new(),
        1 => vec![hi],
        _ => (0..count)
            .map(|i| {
                let t = lo as f64 + (hi - lo) as f64 * i as f64 / (count - 1) as f64;
                t.round() as usize
            })
            .collect(),
    }
}
