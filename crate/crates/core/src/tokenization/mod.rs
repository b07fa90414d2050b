//! Tokenizers, corpus token frequencies and the important-token index.

mod bpe;
mod frequency;
mod index;
mod whitespace;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use bpe::BpeModel;
pub use frequency::{build_frequency_table, Band, BandThresholds, FrequencyTable};
pub use index::{build_token_set_index, TokenSetIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    BpeFile,
    Whitespace,
}

/// A loaded tokenizer. Read-only after construction and shareable across
/// threads.
#[derive(Debug, Clone)]
pub struct TokenizerHandle {
    kind: TokenizerKind,
    fingerprint: String,
    bpe: Option<BpeModel>,
}

impl TokenizerHandle {
    /// Lowercasing word tokenizer: runs of alphanumeric characters are words,
    /// every other non-space character is a token of its own.
    pub fn whitespace() -> Self {
        Self {
            kind: TokenizerKind::Whitespace,
            fingerprint: hex::encode(Sha256::digest(whitespace::DEFINITION)),
            bpe: None,
        }
    }

    /// Loads a BPE definition (`vocab` + ordered `merges`) from JSON. The
    /// fingerprint is the SHA-256 of the file bytes.
    pub fn from_bpe_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bpe_bytes(&bytes)
    }

    pub fn from_bpe_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(Self {
            kind: TokenizerKind::BpeFile,
            fingerprint: hex::encode(Sha256::digest(bytes)),
            bpe: Some(BpeModel::from_json(bytes)?),
        })
    }

    pub fn kind(&self) -> TokenizerKind {
        self.kind
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn bpe(&self) -> Option<&BpeModel> {
        self.bpe.as_ref()
    }

    /// Calls `emit` with each token's surface form, in order.
    pub fn for_each_token(&self, text: &str, mut emit: impl FnMut(&str)) {
        match &self.bpe {
            Some(model) => model.for_each_token(text, |id| emit(model.token(id))),
            None => whitespace::for_each_token(text, emit),
        }
    }

    /// Token surface forms of `text`. Empty text yields no tokens.
    pub fn encode(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each_token(text, |t| out.push(t.to_string()));
        out
    }

    pub fn count_tokens(&self, text: &str) -> usize {
        let mut n = 0;
        self.for_each_token(text, |_| n += 1);
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_examples() {
        let tok = TokenizerHandle::whitespace();
        assert_eq!(tok.encode("a b a"), ["a", "b", "a"]);
        assert!(tok.encode("").is_empty());
        assert_eq!(tok.count_tokens("Hello, World!"), 4);
    }

    #[test]
    fn fingerprints_differ_by_kind() {
        let bpe = TokenizerHandle::from_bpe_bytes(br#"{"vocab":{"a":0},"merges":[]}"#).unwrap();
        assert_ne!(bpe.fingerprint(), TokenizerHandle::whitespace().fingerprint());
        assert_eq!(bpe.kind(), TokenizerKind::BpeFile);
    }
}
