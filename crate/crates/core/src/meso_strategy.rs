//! Tag-level diversity: normalize externally generated tags into categories
//! and vary how many categories a fixed-size dataset is drawn from.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::clustering::{dbscan, distance, EmbeddingMatrix, NOISE};
use crate::corpus::manifest_support::{linear_targets, percent};
use crate::corpus::{select_balanced, Class, Component, Corpus, SeriesManifest, SeriesPoint, Strategy};
use crate::error::{Error, Result};

/// Longest tag, in characters, kept by [`filter_tags`].
pub const MAX_TAG_CHARS: usize = 64;
pub const DEFAULT_EPS: f64 = 0.15;
pub const DEFAULT_MIN_SAMPLES: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRecord {
    pub id: String,
    pub tags: Vec<String>,
}

/// Records read by [`ingest_tags`] and what was dropped on the way.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagIngest {
    pub records: Vec<TagRecord>,
    /// Non-blank lines in the file.
    pub lines: usize,
    pub malformed: usize,
    pub unknown_ids: usize,
    pub duplicate_ids: usize,
    pub empty: usize,
}

impl TagIngest {
    pub fn dropped(&self) -> usize {
        self.malformed + self.unknown_ids + self.duplicate_ids
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTag {
    Plain(String),
    Explained {
        tag: String,
        #[allow(dead_code)]
        #[serde(default)]
        explanation: Option<Value>,
    },
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    tags: Vec<RawTag>,
}

/// Reads JSONL `{"id", "tags": [...]}` where each tag is a string or a
/// `{"tag", "explanation"}` object (the explanation is discarded).
///
/// Records whose id is not in `corpus`, repeated ids and unparsable lines are
/// dropped and counted. Records with no tags are kept with a warning.
pub fn ingest_tags(path: &Path, corpus: &Corpus) -> Result<TagIngest> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = TagIngest::default();
    let mut seen = HashSet::new();
    for (n, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.lines += 1;
        let rec: RawRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{}:{}: skipping malformed tag record: {e}", path.display(), n + 1);
                out.malformed += 1;
                continue;
            }
        };
        if !corpus.contains(&rec.id) {
            out.unknown_ids += 1;
            continue;
        }
        if !seen.insert(rec.id.clone()) {
            out.duplicate_ids += 1;
            continue;
        }
        let tags: Vec<String> = rec
            .tags
            .into_iter()
            .map(|t| match t {
                RawTag::Plain(s) | RawTag::Explained { tag: s, .. } => s,
            })
            .filter(|t| !t.trim().is_empty())
            .collect();
        if tags.is_empty() {
            log::warn!("tag record {:?} has no tags", rec.id);
            out.empty += 1;
        }
        out.records.push(TagRecord { id: rec.id, tags });
    }
    if out.unknown_ids > 0 {
        log::warn!("dropped {} tag records for ids not in the corpus", out.unknown_ids);
    }
    Ok(out)
}

/// Lowercased, trimmed form used for tags and tag-embedding ids.
pub fn normalize_tag(tag: &str) -> String {
    tag.trim().to_lowercase()
}

/// Normalizes tags and drops non-words: a kept tag has at least one
/// alphabetic character and at most [`MAX_TAG_CHARS`] characters. Repeats
/// within a record are removed, first occurrence wins.
pub fn filter_tags(records: Vec<TagRecord>) -> Vec<TagRecord> {
    records
        .into_iter()
        .map(|r| {
            let mut seen = HashSet::new();
            let tags = r
                .tags
                .iter()
                .map(|t| normalize_tag(t))
                .filter(|t| t.chars().any(char::is_alphabetic) && t.chars().count() <= MAX_TAG_CHARS)
                .filter(|t| seen.insert(t.clone()))
                .collect();
            TagRecord { id: r.id, tags }
        })
        .collect()
}

/// Tag categories and the categories of each tagged sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagCatalog {
    /// Tag to category id.
    pub normalized: BTreeMap<String, u64>,
    /// Category id to representative tag.
    pub categories: BTreeMap<u64, String>,
    pub sample_categories: BTreeMap<String, BTreeSet<u64>>,
    /// Number of tags on each sample after filtering.
    pub sample_tag_counts: BTreeMap<String, usize>,
    pub eps: f64,
    pub min_samples: usize,
}

impl TagCatalog {
    pub fn category_count(&self) -> usize {
        self.categories.len()
    }

    pub fn members(&self, category: u64) -> Vec<&str> {
        self.normalized
            .iter()
            .filter(|(_, &c)| c == category)
            .map(|(t, _)| t.as_str())
            .collect()
    }

    /// Distinct categories and total tag count over `ids`.
    pub fn coverage<S: AsRef<str>>(&self, ids: &[S]) -> (usize, usize) {
        let mut cats: BTreeSet<u64> = BTreeSet::new();
        let mut tags = 0;
        for id in ids {
            if let Some(c) = self.sample_categories.get(id.as_ref()) {
                cats.extend(c);
            }
            tags += self.sample_tag_counts.get(id.as_ref()).copied().unwrap_or(0);
        }
        (cats.len(), tags)
    }
}

/// Groups tags whose embeddings lie within `eps` (DBSCAN with `min_samples`)
/// into categories represented by the member closest to the group centroid,
/// ties to the lexicographically smaller tag. Unclustered tags form their own
/// category. Category ids follow the order of representatives.
///
/// Embedding ids are matched after [`normalize_tag`].
pub fn build_tag_catalog(
    records: &[TagRecord],
    tag_embeddings: &EmbeddingMatrix,
    eps: f64,
    min_samples: usize,
) -> Result<TagCatalog> {
    let tags: Vec<&str> = records
        .iter()
        .flat_map(|r| r.tags.iter().map(String::as_str))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rows: HashMap<String, usize> = HashMap::new();
    for (i, id) in tag_embeddings.ids().iter().enumerate() {
        let key = normalize_tag(id);
        match rows.entry(key) {
            Entry::Occupied(_) => {
                log::warn!("tag embedding {id:?} duplicates an earlier row after normalization; ignored")
            }
            Entry::Vacant(slot) => {
                slot.insert(i);
            }
        }
    }
    let missing: Vec<String> = tags.iter().filter(|t| !rows.contains_key(**t)).map(|t| t.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds {
            what: "tag embeddings",
            missing,
        });
    }
    let mut data = Vec::with_capacity(tags.len() * tag_embeddings.dim());
    for t in &tags {
        data.extend_from_slice(tag_embeddings.row(rows[*t]));
    }
    let matrix = EmbeddingMatrix::from_flat(tags.iter().map(|t| t.to_string()).collect(), tag_embeddings.dim(), data)?;

    let groups: Vec<Vec<usize>> = if tags.is_empty() {
        Vec::new()
    } else {
        let assignment = dbscan(&matrix, eps, min_samples)?;
        let mut clusters: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        let mut singles = Vec::new();
        for (i, &l) in assignment.labels.iter().enumerate() {
            if l == NOISE {
                singles.push(vec![i]);
            } else {
                clusters.entry(l).or_default().push(i);
            }
        }
        clusters.into_values().chain(singles).collect()
    };

    let mut named: Vec<(usize, &Vec<usize>)> = groups
        .iter()
        .map(|members| (representative(&matrix, members), members))
        .collect();
    named.sort_by(|a, b| tags[a.0].cmp(tags[b.0]));

    let mut normalized = BTreeMap::new();
    let mut categories = BTreeMap::new();
    for (cat, (rep, members)) in named.iter().enumerate() {
        categories.insert(cat as u64, tags[*rep].to_string());
        for &m in members.iter() {
            normalized.insert(tags[m].to_string(), cat as u64);
        }
    }
    let mut sample_categories = BTreeMap::new();
    let mut sample_tag_counts = BTreeMap::new();
    for r in records {
        sample_categories.insert(r.id.clone(), r.tags.iter().map(|t| normalized[t]).collect());
        sample_tag_counts.insert(r.id.clone(), r.tags.len());
    }
    Ok(TagCatalog {
        normalized,
        categories,
        sample_categories,
        sample_tag_counts,
        eps,
        min_samples,
    })
}

/// Member closest to the centroid; members are in tag order, so the first
/// minimum is the lexicographically smallest.
fn representative(m: &EmbeddingMatrix, members: &[usize]) -> usize {
    let mut centroid = vec![0.0; m.dim()];
    for &i in members {
        for (c, v) in centroid.iter_mut().zip(m.row(i)) {
            *c += v;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= members.len() as f64);
    let mut best = (f64::INFINITY, members[0]);
    for &i in members {
        let d = distance(m.row(i), &centroid);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Builds `points` datasets of `size` samples drawn evenly from the `k` most
/// frequent tag categories, `k` spaced linearly from the fewest categories
/// that can supply `size` samples up to all categories. A sample holding
/// several chosen categories is taken once.
pub fn build_meso_series(
    catalog: &TagCatalog,
    corpus: &Corpus,
    component: Component,
    size: usize,
    points: usize,
    seed: u64,
) -> Result<SeriesManifest> {
    if points < 2 {
        return Err(Error::precondition("a series needs at least 2 points"));
    }
    let unknown: Vec<String> = catalog
        .sample_categories
        .keys()
        .filter(|id| !corpus.contains(id))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::MissingIds {
            what: "corpus samples",
            missing: unknown,
        });
    }
    let mut holders: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    for (id, cats) in &catalog.sample_categories {
        for &c in cats {
            holders.entry(c).or_default().push(id.clone());
        }
    }
    let mut classes: Vec<Class> = holders.into_iter().map(|(c, m)| Class::new(c, m)).collect();
    classes.sort_by(|a, b| b.members.len().cmp(&a.members.len()).then(a.id.cmp(&b.id)));

    let mut union = HashSet::new();
    let mut k_min = None;
    for (i, c) in classes.iter().enumerate() {
        union.extend(c.members.iter().map(String::as_str));
        if k_min.is_none() && union.len() >= size {
            k_min = Some(i + 1);
        }
    }
    let (Some(k_min), true) = (k_min, size > 0) else {
        return Err(Error::Insufficient {
            needed: size,
            available: union.len(),
        });
    };
    let k_max = classes.len();
    if k_min == k_max {
        return Err(Error::DegenerateSeries(format!(
            "every feasible category count equals {k_max}; no range to span"
        )));
    }

    let targets = linear_targets(k_min, k_max, points);
    let mut series = Vec::with_capacity(points);
    let mut per_point = Vec::with_capacity(points);
    for &k in &targets {
        let sel = select_balanced(&classes[..k], size, seed)?;
        let (distinct, instances) = catalog.coverage(&sel.ids);
        per_point.push(json!({
            "categories": k,
            "distinct_categories": distinct,
            "tag_instances": instances,
            "category_ratio": if instances == 0 { 0.0 } else { distinct as f64 / instances as f64 },
        }));
        series.push(SeriesPoint {
            diversity_value: k as u64,
            diversity_percent: percent(k as f64, k_min as f64, k_max as f64),
            sample_ids: sel.ids,
        });
    }

    let mut parameters = BTreeMap::new();
    parameters.insert("tag_clustering".into(), json!("dbscan"));
    parameters.insert("eps".into(), json!(catalog.eps));
    parameters.insert("min_samples".into(), json!(catalog.min_samples));
    parameters.insert("tag_filter".into(), json!(format!(
        "lowercase+trim; at least one alphabetic char; at most {MAX_TAG_CHARS} chars"
    )));
    parameters.insert("category_count".into(), json!(k_max));
    parameters.insert("tagged_samples".into(), json!(catalog.sample_categories.len()));
    parameters.insert(
        "category_order".into(),
        json!(classes.iter().map(|c| c.id).collect::<Vec<_>>()),
    );
    parameters.insert("category_order_rule".into(), json!("descending sample frequency, then category id"));
    parameters.insert("k_min".into(), json!(k_min));
    parameters.insert("k_max".into(), json!(k_max));
    parameters.insert("target_schedule".into(), json!("linear"));
    parameters.insert("targets".into(), json!(targets));
    parameters.insert("overlap_rule".into(), json!("select once, refill quota from category pool"));
    parameters.insert("points".into(), Value::Array(per_point));

    Ok(SeriesManifest {
        strategy: Strategy::Meso,
        component,
        size,
        points: series,
        seed,
        parameters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sample;

    fn corpus(n: usize) -> Corpus {
        Corpus::from_samples(
            (0..n)
                .map(|i| Sample {
                    id: format!("s{i}"),
                    instruction: format!("q{i}"),
                    response: format!("a{i}"),
                })
                .collect(),
        )
        .unwrap()
    }

    fn rec(id: &str, tags: &[&str]) -> TagRecord {
        TagRecord {
            id: id.into(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
        }
    }

    #[test]
    fn filter_rules() {
        let out = filter_tags(vec![rec(
            "s0",
            &["Spelling and Grammar Check", "1234", "  Cosplay  ", "cosplay", "!!", &"x".repeat(65)],
        )]);
        assert_eq!(out[0].tags, ["spelling and grammar check", "cosplay"]);
    }

    #[test]
    fn ingest_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tags.jsonl");
        fs::write(
            &path,
            concat!(
                "{\"id\":\"s1\",\"tags\":[\"Cosplay\"]}\n",
                "{\"id\":\"s2\",\"tags\":[{\"tag\":\"Poetry\",\"explanation\":\"verse\"}]}\n",
                "{\"id\":\"s3\",\"tags\":[]}\n",
                "{\"id\":\"zz\",\"tags\":[\"x\"]}\n",
                "not json\n",
                "{\"id\":\"s1\",\"tags\":[\"again\"]}\n",
            ),
        )
        .unwrap();
        let got = ingest_tags(&path, &corpus(5)).unwrap();
        assert_eq!(got.records.len() + got.dropped(), got.lines);
        assert_eq!(got.records[0], rec("s1", &["Cosplay"]));
        assert_eq!(got.records[1], rec("s2", &["Poetry"]));
        assert!(got.records[2].tags.is_empty());
        assert_eq!((got.unknown_ids, got.malformed, got.duplicate_ids, got.empty), (1, 1, 1, 1));
    }

    fn embeddings(rows: &[(&str, [f64; 2])]) -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            rows.iter().map(|r| r.0.to_string()).collect(),
            rows.iter().map(|r| r.1.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn synonyms_share_a_category() {
        let records = vec![rec("s0", &["poem", "poetry"]), rec("s1", &["recipe"])];
        let e = embeddings(&[("Poem", [0.0, 0.0]), ("poetry", [0.05, 0.0]), ("recipe", [1.0, 1.0])]);
        let cat = build_tag_catalog(&records, &e, 0.15, 2).unwrap();
        assert_eq!(cat.category_count(), 2);
        assert_eq!(cat.normalized["poem"], cat.normalized["poetry"]);
        assert_eq!(cat.categories[&cat.normalized["poem"]], "poem");
        assert_eq!(cat.sample_categories["s0"].len(), 1);
        assert_eq!(cat.coverage(&["s0", "s1"]), (2, 3));
    }

    #[test]
    fn missing_tag_embedding() {
        let e = embeddings(&[("poem", [0.0, 0.0])]);
        assert!(matches!(
            build_tag_catalog(&[rec("s0", &["poem", "ode"])], &e, 0.15, 2),
            Err(Error::MissingIds { .. })
        ));
    }

    #[test]
    fn multi_category_sample_selected_once() {
        let c = corpus(6);
        let records = vec![
            rec("s0", &["a", "b", "c"]),
            rec("s1", &["a"]),
            rec("s2", &["b"]),
            rec("s3", &["c"]),
            rec("s4", &["a"]),
            rec("s5", &["d"]),
        ];
        let e = embeddings(&[("a", [0.0, 0.0]), ("b", [1.0, 0.0]), ("c", [2.0, 0.0]), ("d", [3.0, 0.0])]);
        let cat = build_tag_catalog(&records, &e, 0.15, 2).unwrap();
        let s = build_meso_series(&cat, &c, Component::Instruction, 4, 2, 9).unwrap();
        for p in &s.points {
            let set: BTreeSet<_> = p.sample_ids.iter().collect();
            assert_eq!(set.len(), 4);
        }
        assert_eq!(s.points[1].diversity_value, 4);
        assert_eq!(s.points[0].diversity_percent, 0.0);
    }
}
