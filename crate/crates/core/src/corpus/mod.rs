//! Instruction-response corpora: ingest, cleaning, persistence and
//! class-balanced selection.

mod manifest;
mod select;

pub(crate) mod manifest_support {
    pub(crate) use super::manifest::{linear_targets, percent};
}

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::tokenization::TokenizerHandle;

pub use manifest::{SeriesManifest, SeriesPoint, Strategy};
pub use select::{select_balanced, uniform_select, Class};

/// Which side of a training pair a strategy or metric reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Instruction,
    Response,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::Instruction => "instruction",
            Component::Response => "response",
        })
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "instruction" => Ok(Component::Instruction),
            "response" => Ok(Component::Response),
            other => Err(Error::precondition(format!(
                "unknown component {other:?} (expected instruction or response)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub instruction: String,
    pub response: String,
}

impl Sample {
    pub fn text(&self, component: Component) -> &str {
        match component {
            Component::Instruction => &self.instruction,
            Component::Response => &self.response,
        }
    }

    fn dedup_key(&self) -> (String, String) {
        (normalize(&self.instruction), normalize(&self.response))
    }
}

fn normalize(text: &str) -> String {
    text.trim().nfc().collect()
}

/// Cleaning rules applied during ingest. Recorded in the store manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningParams {
    pub dedup_key: String,
    pub encoding_filter: String,
}

impl Default for CleaningParams {
    fn default() -> Self {
        Self {
            dedup_key: "(instruction, response) after NFC normalization and trimming".into(),
            encoding_filter: "valid UTF-8, no control characters except tab and newline".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub records: usize,
    pub malformed: usize,
    pub invalid_encoding: usize,
    pub duplicates: usize,
    pub duplicate_ids: usize,
    pub kept: usize,
}

impl IngestStats {
    pub fn dropped(&self) -> usize {
        self.malformed + self.invalid_encoding + self.duplicates + self.duplicate_ids
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Hex SHA-256 of the source file bytes.
    pub source_digest: String,
    pub cleaning: CleaningParams,
    pub stats: IngestStats,
}

/// An ordered, deduplicated collection of samples. Immutable after ingest.
#[derive(Debug, Clone)]
pub struct Corpus {
    samples: Vec<Sample>,
    by_id: HashMap<String, usize>,
    provenance: Provenance,
}

impl Corpus {
    /// Builds a corpus from already-clean samples. Fails on empty input or
    /// duplicate ids.
    pub fn from_samples(samples: Vec<Sample>) -> Result<Self> {
        let mut digest = Sha256::new();
        for s in &samples {
            digest.update(serde_json::to_vec(s).expect("sample serializes"));
            digest.update(b"\n");
        }
        let stats = IngestStats {
            records: samples.len(),
            kept: samples.len(),
            ..Default::default()
        };
        let provenance = Provenance {
            source_digest: hex::encode(digest.finalize()),
            cleaning: CleaningParams::default(),
            stats,
        };
        Self::assemble(samples, provenance)
    }

    fn assemble(samples: Vec<Sample>, provenance: Provenance) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::precondition("corpus has no samples"));
        }
        let mut by_id = HashMap::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.id.is_empty() {
                return Err(Error::precondition(format!("sample at position {i} has an empty id")));
            }
            if by_id.insert(s.id.clone(), i).is_some() {
                return Err(Error::precondition(format!("duplicate sample id {:?}", s.id)));
            }
        }
        Ok(Self {
            samples,
            by_id,
            provenance,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.by_id.get(id).map(|&i| &self.samples[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Texts of `component` for the given ids, in the order given.
    pub fn texts<I>(&self, ids: I, component: Component) -> Result<Vec<&str>>
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
    {
        let mut missing = Vec::new();
        let mut out = Vec::new();
        for id in ids {
            match self.get(id.as_ref()) {
                Some(s) => out.push(s.text(component)),
                None => missing.push(id.as_ref().to_string()),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(Error::MissingIds {
                what: "corpus",
                missing,
            })
        }
    }

    /// Writes the samples as JSONL in the ingest format.
    pub fn export(&self, path: &Path) -> Result<()> {
        write_samples(path, self.samples.iter())
    }

    /// Writes the samples with the given ids, in corpus order, as JSONL.
    pub fn export_subset(&self, ids: &[String], path: &Path) -> Result<()> {
        let wanted: HashSet<&str> = ids.iter().map(String::as_str).collect();
        let missing: Vec<String> = ids.iter().filter(|id| !self.contains(id)).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::MissingIds {
                what: "corpus",
                missing,
            });
        }
        write_samples(path, self.samples.iter().filter(|s| wanted.contains(s.id.as_str())))
    }

    /// Persists the corpus as a store directory: `samples.jsonl` plus
    /// `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.export(&dir.join(STORE_PAYLOAD))?;
        let manifest = StoreManifest {
            samples: self.len(),
            provenance: self.provenance.clone(),
        };
        let path = dir.join(STORE_MANIFEST);
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, body + "\n").map_err(|e| Error::io(path, e))
    }

    /// Loads a store written by [`Corpus::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(STORE_MANIFEST);
        let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: StoreManifest =
            serde_json::from_str(&raw).map_err(|e| Error::format("store manifest", e))?;
        let payload = dir.join(STORE_PAYLOAD);
        let corpus = ingest(&payload)?;
        if corpus.len() != manifest.samples {
            return Err(Error::format(
                "corpus store",
                format!(
                    "manifest records {} samples, payload holds {}",
                    manifest.samples,
                    corpus.len()
                ),
            ));
        }
        Self::assemble(corpus.samples, manifest.provenance)
    }
}

pub const STORE_PAYLOAD: &str = "samples.jsonl";
pub const STORE_MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct StoreManifest {
    samples: usize,
    provenance: Provenance,
}

fn write_samples<'a>(path: &Path, samples: impl Iterator<Item = &'a Sample>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in samples {
        serde_json::to_writer(&mut out, s).expect("sample serializes");
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a JSONL file of `{"instruction", "response", "id"?}` records.
///
/// Records that fail to parse are skipped and counted. Records whose text is
/// not valid UTF-8 or carries control characters other than tab and newline
/// are dropped. Exact duplicates (after NFC normalization and trimming) keep
/// their first occurrence. Records without an id get the zero-padded ordinal
/// of their line among non-blank lines.
pub fn ingest(path: &Path) -> Result<Corpus> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let source_digest = hex::encode(Sha256::digest(&bytes));

    let lines: Vec<&[u8]> = bytes
        .split(|&b| b == b'\n')
        .filter(|l| !l.iter().all(u8::is_ascii_whitespace))
        .collect();
    let width = lines.len().to_string().len().max(6);

    let mut stats = IngestStats {
        records: lines.len(),
        ..Default::default()
    };
    let mut seen_keys = HashSet::new();
    let mut seen_ids = HashSet::new();
    let mut samples = Vec::new();

    for (ordinal, line) in lines.into_iter().enumerate() {
        let (text, lossy) = match std::str::from_utf8(line) {
            Ok(t) => (std::borrow::Cow::Borrowed(t), false),
            Err(_) => (String::from_utf8_lossy(line), true),
        };
        let record = match parse_record(&text) {
            Some(r) => r,
            None => {
                stats.malformed += 1;
                warn!("{}: skipping malformed record {}", path.display(), ordinal + 1);
                continue;
            }
        };
        if lossy || !clean_text(&record.instruction) || !clean_text(&record.response) {
            stats.invalid_encoding += 1;
            continue;
        }
        let id = record
            .id
            .unwrap_or_else(|| format!("{:0width$}", ordinal, width = width));
        let sample = Sample {
            id,
            instruction: record.instruction,
            response: record.response,
        };
        if !seen_keys.insert(sample.dedup_key()) {
            stats.duplicates += 1;
            continue;
        }
        if !seen_ids.insert(sample.id.clone()) {
            stats.duplicate_ids += 1;
            warn!("{}: dropping record with repeated id {:?}", path.display(), sample.id);
            continue;
        }
        samples.push(sample);
    }

    stats.kept = samples.len();
    if samples.is_empty() {
        return Err(Error::EmptyCorpus {
            path: path.to_path_buf(),
        });
    }
    if stats.dropped() > 0 {
        log::info!(
            "{}: kept {} of {} records ({} malformed, {} encoding, {} duplicate, {} repeated id)",
            path.display(),
            stats.kept,
            stats.records,
            stats.malformed,
            stats.invalid_encoding,
            stats.duplicates,
            stats.duplicate_ids
        );
    }
    Corpus::assemble(
        samples,
        Provenance {
            source_digest,
            cleaning: CleaningParams::default(),
            stats,
        },
    )
}

struct RawRecord {
    id: Option<String>,
    instruction: String,
    response: String,
}

fn parse_record(line: &str) -> Option<RawRecord> {
    let value: Value = serde_json::from_str(line).ok()?;
    let obj = value.as_object()?;
    let instruction = obj.get("instruction")?.as_str()?.to_string();
    let response = obj.get("response")?.as_str()?.to_string();
    let id = match obj.get("id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        Some(_) => return None,
    };
    Some(RawRecord {
        id,
        instruction,
        response,
    })
}

fn clean_text(text: &str) -> bool {
    !text.chars().any(|c| c.is_control() && c != '\t' && c != '\n')
}

/// Ids whose `component` token length lies in `lo..=hi` (`hi = None` means
/// unbounded), sorted ascending.
pub fn length_window_filter(
    corpus: &Corpus,
    component: Component,
    lo: usize,
    hi: Option<usize>,
    tokenizer: &TokenizerHandle,
) -> Result<BTreeSet<String>> {
    let hi = hi.unwrap_or(usize::MAX);
    if lo > hi {
        return Err(Error::precondition(format!("length window [{lo}, {hi}] is empty")));
    }
    use rayon::prelude::*;
    Ok(corpus
        .samples()
        .par_iter()
        .filter(|s| {
            let len = tokenizer.count_tokens(s.text(component));
            lo <= len && len <= hi
        })
        .map(|s| s.id.clone())
        .collect::<Vec<_>>()
        .into_iter()
        .collect())
}

/// Reads a JSONL dataset as is: no cleaning, deduplication or reordering.
/// Records without an id are numbered by line like [`ingest`] does. Any
/// unparsable record is an error.
pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<(usize, &str)> = raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).collect();
    let width = lines.len().to_string().len().max(6);
    lines
        .iter()
        .enumerate()
        .map(|(ordinal, (n, line))| {
            let rec = parse_record(line).ok_or_else(|| {
                Error::format("dataset JSONL", format!("{}:{}: not a sample record", path.display(), n + 1))
            })?;
            Ok(Sample {
                id: rec.id.unwrap_or_else(|| format!("{:0width$}", ordinal, width = width)),
                instruction: rec.instruction,
                response: rec.response,
            })
        })
        .collect()
}
