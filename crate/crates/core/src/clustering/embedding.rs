use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Row-major matrix of finite vectors, one row per id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct JsonlRow {
    id: String,
    vector: Vec<f64>,
}

#[derive(Deserialize)]
struct Sidecar {
    dim: usize,
    count: usize,
    ids: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::format(
                "embedding matrix",
                format!("{} ids for {} rows", ids.len(), rows.len()),
            ));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(dim * rows.len());
        for (id, row) in ids.iter().zip(&rows) {
            if row.len() != dim {
                return Err(Error::format(
                    "embedding matrix",
                    format!("row {id:?} has dimension {}, expected {dim}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(ids, dim, data)
    }

    pub fn from_flat(ids: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != ids.len() * dim {
            return Err(Error::format(
                "embedding matrix",
                format!("{} values for {} rows of dimension {dim}", data.len(), ids.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                "embedding matrix",
                format!("non-finite component in row {:?}", ids[pos / dim.max(1)]),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::format("embedding matrix", format!("duplicate id {dup:?}")));
        }
        Ok(Self { ids, dim, data })
    }

    /// Loads `.jsonl` files of `{"id", "vector"}` records, or a flat
    /// little-endian `f32` file with a `<file>.json` sidecar holding
    /// `{dim, count, ids}`. Passing the sidecar path also works.
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "jsonl") {
            return Self::load_jsonl(path);
        }
        let mut sidecar = path.as_os_str().to_owned();
        sidecar.push(".json");
        let sidecar = PathBuf::from(sidecar);
        if sidecar.exists() {
            return Self::load_binary(path, &sidecar);
        }
        if path.extension().is_some_and(|e| e == "json") {
            return Self::load_binary(&path.with_extension(""), path);
        }
        Err(Error::format(
            "embedding file",
            format!("{}: expected .jsonl or a binary file with a .json sidecar", path.display()),
        ))
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (n, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: JsonlRow = serde_json::from_str(line).map_err(|e| {
                Error::format("embedding JSONL", format!("{}:{}: {e}", path.display(), n + 1))
            })?;
            ids.push(row.id);
            rows.push(row.vector);
        }
        Self::new(ids, rows)
    }

    pub fn load_binary(data_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
        let meta: Sidecar =
            serde_json::from_str(&raw).map_err(|e| Error::format("embedding sidecar", e))?;
        if meta.ids.len() != meta.count {
            return Err(Error::format(
                "embedding sidecar",
                format!("count {} but {} ids", meta.count, meta.ids.len()),
            ));
        }
        let bytes = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
        if bytes.len() != meta.count * meta.dim * 4 {
            return Err(Error::format(
                "embedding binary",
                format!(
                    "{} bytes, expected {} ({} x {} f32)",
                    bytes.len(),
                    meta.count * meta.dim * 4,
                    meta.count,
                    meta.dim
                ),
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::from_flat(meta.ids, meta.dim, data)
    }

    /// Writes the binary layout read by [`EmbeddingMatrix::load_binary`].
    pub fn save_binary(&self, data_path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        fs::write(data_path, bytes).map_err(|e| Error::io(data_path, e))?;
        let mut sidecar = data_path.as_os_str().to_owned();
        sidecar.push(".json");
        let meta = serde_json::json!({"dim": self.dim, "count": self.len(), "ids": self.ids});
        fs::write(PathBuf::from(&sidecar), meta.to_string()).map_err(|e| Error::io(sidecar, e))
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.ids.len())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Rows for `ids`, in that order. Fails listing every id without a row.
    pub fn select<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let pos: HashMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let missing: Vec<String> = ids
            .iter()
            .filter(|id| !pos.contains_key(id.as_ref()))
            .map(|id| id.as_ref().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingIds {
                what: "embeddings",
                missing,
            });
        }
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            data.extend_from_slice(self.row(pos[id.as_ref()]));
        }
        Self::from_flat(ids.iter().map(|s| s.as_ref().to_string()).collect(), self.dim, data)
    }

    /// Hex SHA-256 over dimension, ids and component bit patterns.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for id in &self.ids {
            h.update(id.as_bytes());
            h.update([0]);
        }
        for v in &self.data {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}
