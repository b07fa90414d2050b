//! Class-balanced selection: draw a fixed number of samples spread as evenly
//! as possible over a set of classes.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const STREAM: &str = "uniform_select";

/// A class of samples: a topic cluster, a tag category, ...
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Class {
    pub id: u64,
    pub members: Vec<String>,
}

impl Class {
    pub fn new(id: u64, members: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            id,
            members: members.into_iter().map(Into::into).collect(),
        }
    }
}

/// Outcome of [`select_balanced`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    /// Selected ids, sorted ascending.
    pub ids: Vec<String>,
    /// `(class id, samples credited to that class)` in class priority order
    /// (descending size, then ascending id).
    pub per_class: Vec<(u64, usize)>,
}

/// Selects exactly `n` distinct ids spread uniformly over `classes`.
///
/// Classes are ranked by descending size, then ascending id; the order in
/// which they are passed does not matter. Each class gets a quota of
/// `floor(n/k)` or `ceil(n/k)` (the larger quotas go to the top-ranked
/// classes). A class smaller than its quota contributes all of its members and
/// the shortfall is handed out one sample at a time, round-robin over the
/// remaining classes in rank order. Within a class, members are drawn in a
/// seeded random order keyed by the class id.
///
/// Classes may overlap. A sample already taken by an earlier class is skipped
/// and the class takes its next candidate instead; any remaining shortfall is
/// filled round-robin.
pub fn uniform_select(classes: &[Class], n: usize, seed: u64) -> Result<Vec<String>> {
    select_balanced(classes, n, seed).map(|s| s.ids)
}

/// [`uniform_select`] with per-class accounting.
pub fn select_balanced(classes: &[Class], n: usize, seed: u64) -> Result<Selection> {
    if classes.is_empty() {
        return Err(Error::precondition("uniform_select needs at least one class"));
    }
    let mut ranked: Vec<(u64, Vec<&str>)> = classes
        .iter()
        .map(|c| {
            let mut m: Vec<&str> = c.members.iter().map(String::as_str).collect();
            m.sort_unstable();
            m.dedup();
            (c.id, m)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    if let Some(w) = ranked.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::precondition(format!("class id {} appears twice", w[0].0)));
    }

    let union: HashSet<&str> = ranked.iter().flat_map(|(_, m)| m.iter().copied()).collect();
    if union.len() < n {
        return Err(Error::Insufficient {
            needed: n,
            available: union.len(),
        });
    }

    let sizes: Vec<usize> = ranked.iter().map(|(_, m)| m.len()).collect();
    let quotas = quotas(&sizes, n);

    // Seeded draw order per class.
    let orders: Vec<Vec<&str>> = ranked
        .iter()
        .map(|(id, members)| {
            let mut order = members.clone();
            let mut stream = rng::stream(seed, STREAM, &id.to_le_bytes());
            rng::shuffle(&mut stream, &mut order);
            order
        })
        .collect();
    let mut cursors = vec![0usize; ranked.len()];
    let mut credited = vec![0usize; ranked.len()];
    let mut taken: HashSet<&str> = HashSet::with_capacity(n);

    for class in 0..ranked.len() {
        while credited[class] < quotas[class] {
            if next_fresh(&orders[class], &mut cursors[class], &mut taken).is_none() {
                break;
            }
            credited[class] += 1;
        }
    }
    // Overlap shortfall: round-robin refill in rank order.
    while taken.len() < n {
        let mut progressed = false;
        for class in 0..ranked.len() {
            if taken.len() == n {
                break;
            }
            if next_fresh(&orders[class], &mut cursors[class], &mut taken).is_some() {
                credited[class] += 1;
                progressed = true;
            }
        }
        debug_assert!(progressed, "union covers n");
        if !progressed {
            break;
        }
    }

    let mut ids: Vec<String> = taken.into_iter().map(str::to_string).collect();
    ids.sort_unstable();
    Ok(Selection {
        ids,
        per_class: ranked.iter().map(|(id, _)| *id).zip(credited).collect(),
    })
}

fn next_fresh<'a>(order: &[&'a str], cursor: &mut usize, taken: &mut HashSet<&'a str>) -> Option<&'a str> {
    while *cursor < order.len() {
        let id = order[*cursor];
        *cursor += 1;
        if taken.insert(id) {
            return Some(id);
        }
    }
    None
}

/// Per-class quotas for classes already in rank order.
pub(crate) fn quotas(sizes: &[usize], n: usize) -> Vec<usize> {
    let k = sizes.len();
    let (base, extra) = (n / k, n % k);
    let mut quota: Vec<usize> = (0..k).map(|i| base + usize::from(i < extra)).collect();
    let mut deficit = 0;
    for (q, &size) in quota.iter_mut().zip(sizes) {
        if *q > size {
            deficit += *q - size;
            *q = size;
        }
    }
    while deficit > 0 {
        let mut progressed = false;
        for (q, &size) in quota.iter_mut().zip(sizes) {
            if deficit == 0 {
                break;
            }
            if size > *q {
                *q += 1;
                deficit -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    quota
}
