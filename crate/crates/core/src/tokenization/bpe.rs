//! Byte-pair encoding from a JSON definition file.
//!
//! Two layouts are accepted:
//!
//! - flat: `{"vocab": {token: id}, "merges": [...], "byte_level"?: bool, "unk_token"?: str}`
//! - the `tokenizer.json` layout: `{"model": {"type": "BPE", "vocab", "merges", "unk_token"?},
//!   "pre_tokenizer": {...}}`
//!
//! Merges are either `"left right"` strings or `["left", "right"]` pairs,
//! highest priority first. In byte-level mode (the default for the flat
//! layout; detected from a `ByteLevel` pre-tokenizer otherwise) text is split
//! into GPT-2 style pre-tokens and every byte is mapped onto the printable
//! byte alphabet before merging. Otherwise pre-tokens are whitespace-separated
//! words and initial symbols are characters.

use std::collections::HashMap;

use serde_json::Value;

use crate::error::{Error, Result};

/// Symbol that has no vocabulary entry and no unknown token to fall back to.
const UNMAPPED: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct BpeModel {
    vocab: HashMap<String, u32>,
    tokens: Vec<Option<String>>,
    merges: HashMap<(u32, u32), (u32, u32)>,
    byte_level: bool,
    unk: Option<u32>,
    byte_ids: Vec<u32>,
}

impl BpeModel {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let root: Value = serde_json::from_slice(bytes)
            .map_err(|e| Error::Tokenizer(format!("not valid JSON: {e}")))?;
        let (model, byte_level) = match root.get("model") {
            Some(model) => {
                if let Some(kind) = model.get("type").and_then(Value::as_str) {
                    if kind != "BPE" {
                        return Err(Error::Tokenizer(format!("model type {kind:?} is not BPE")));
                    }
                }
                let byte_level = root
                    .get("pre_tokenizer")
                    .map(|p| p.to_string().contains("\"ByteLevel\""))
                    .unwrap_or(false);
                (model, byte_level)
            }
            None => {
                let byte_level = match root.get("byte_level") {
                    None => true,
                    Some(v) => v
                        .as_bool()
                        .ok_or_else(|| Error::Tokenizer("byte_level must be a boolean".into()))?,
                };
                (&root, byte_level)
            }
        };

        let vocab_obj = model
            .get("vocab")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::Tokenizer("missing \"vocab\" object".into()))?;
        let mut vocab = HashMap::with_capacity(vocab_obj.len());
        let mut tokens: Vec<Option<String>> = Vec::new();
        for (token, id) in vocab_obj {
            let id = id
                .as_u64()
                .filter(|&i| i < UNMAPPED as u64)
                .ok_or_else(|| Error::Tokenizer(format!("token {token:?} has a non-integer id")))?
                as u32;
            let slot = id as usize;
            if tokens.len() <= slot {
                tokens.resize(slot + 1, None);
            }
            if let Some(prev) = &tokens[slot] {
                return Err(Error::Tokenizer(format!(
                    "id {id} assigned to both {prev:?} and {token:?}"
                )));
            }
            tokens[slot] = Some(token.clone());
            vocab.insert(token.clone(), id);
        }

        let merge_list = model
            .get("merges")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Tokenizer("missing \"merges\" array".into()))?;
        let mut merges = HashMap::with_capacity(merge_list.len());
        for (rank, entry) in merge_list.iter().enumerate() {
            let (left, right) = parse_merge(entry)
                .ok_or_else(|| Error::Tokenizer(format!("merge #{rank} is malformed: {entry}")))?;
            let lookup = |t: &str| {
                vocab
                    .get(t)
                    .copied()
                    .ok_or_else(|| Error::Tokenizer(format!("merge #{rank} uses unknown token {t:?}")))
            };
            let pair = (lookup(&left)?, lookup(&right)?);
            let merged = lookup(&format!("{left}{right}"))?;
            // Earlier entries win on repeats.
            merges.entry(pair).or_insert((rank as u32, merged));
        }

        let unk = match model.get("unk_token") {
            None | Some(Value::Null) => None,
            Some(Value::String(t)) => Some(
                *vocab
                    .get(t)
                    .ok_or_else(|| Error::Tokenizer(format!("unk_token {t:?} not in vocab")))?,
            ),
            Some(_) => return Err(Error::Tokenizer("unk_token must be a string".into())),
        };
        let fallback = unk.unwrap_or(UNMAPPED);
        let byte_ids = byte_alphabet()
            .iter()
            .map(|c| vocab.get(&c.to_string()).copied().unwrap_or(fallback))
            .collect();

        Ok(Self {
            vocab,
            tokens,
            merges,
            byte_level,
            unk,
            byte_ids,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_byte_level(&self) -> bool {
        self.byte_level
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.vocab.get(token).copied()
    }

    /// Surface form of a vocabulary id.
    ///
    /// # Panics
    /// If `id` is not in the vocabulary.
    pub fn token(&self, id: u32) -> &str {
        self.tokens
            .get(id as usize)
            .and_then(Option::as_deref)
            .unwrap_or_else(|| panic!("token id {id} not in vocabulary"))
    }

    pub fn encode_ids(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        self.for_each_token(text, |id| out.push(id));
        out
    }

    /// Concatenates the surface forms; byte-level vocabularies are mapped back
    /// to bytes (invalid UTF-8 is replaced).
    pub fn decode(&self, ids: &[u32]) -> String {
        let joined: String = ids.iter().map(|&id| self.token(id)).collect();
        if !self.byte_level {
            return joined;
        }
        let inverse = byte_alphabet_inverse();
        let bytes: Vec<u8> = joined
            .chars()
            .flat_map(|c| match inverse.get(&c) {
                Some(&b) => vec![b],
                None => c.to_string().into_bytes(),
            })
            .collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }

    pub(super) fn for_each_token(&self, text: &str, mut emit: impl FnMut(u32)) {
        let mut symbols = Vec::new();
        let mut each_piece = |piece: &str| {
            symbols.clear();
            if self.byte_level {
                symbols.extend(piece.bytes().map(|b| self.byte_ids[b as usize]));
            } else {
                let mut buf = [0u8; 4];
                symbols.extend(piece.chars().map(|c| {
                    self.vocab
                        .get(c.encode_utf8(&mut buf) as &str)
                        .copied()
                        .or(self.unk)
                        .unwrap_or(UNMAPPED)
                }));
            }
            self.merge(&mut symbols);
            for &id in symbols.iter() {
                if id != UNMAPPED {
                    emit(id);
                }
            }
        };
        if self.byte_level {
            pretokenize(text, &mut each_piece);
        } else {
            text.split_whitespace().for_each(&mut each_piece);
        }
    }

    /// Repeatedly merges the adjacent pair with the best rank (all of its
    /// occurrences, left to right) until no pair has a rule.
    fn merge(&self, symbols: &mut Vec<u32>) {
        loop {
            let mut best: Option<(u32, u32, (u32, u32))> = None;
            for w in symbols.windows(2) {
                if let Some(&(rank, merged)) = self.merges.get(&(w[0], w[1])) {
                    if best.is_none_or(|b| rank < b.0) {
                        best = Some((rank, merged, (w[0], w[1])));
                    }
                }
            }
            let Some((_, merged, pair)) = best else {
                return;
            };
            let mut write = 0;
            let mut read = 0;
            while read < symbols.len() {
                if read + 1 < symbols.len() && (symbols[read], symbols[read + 1]) == pair {
                    symbols[write] = merged;
                    read += 2;
                } else {
                    symbols[write] = symbols[read];
                    read += 1;
                }
                write += 1;
            }
            symbols.truncate(write);
        }
    }
}

fn parse_merge(entry: &Value) -> Option<(String, String)> {
    match entry {
        Value::String(s) => {
            let (l, r) = s.split_once(' ')?;
            (!l.is_empty() && !r.is_empty() && !r.contains(' ')).then(|| (l.to_string(), r.to_string()))
        }
        Value::Array(parts) if parts.len() == 2 => Some((
            parts[0].as_str()?.to_string(),
            parts[1].as_str()?.to_string(),
        )),
        _ => None,
    }
}

/// The printable stand-in character for every byte value (GPT-2 table).
pub(crate) fn byte_alphabet() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut next = 256u32;
    for b in 0..=255u8 {
        let printable = matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF);
        table[b as usize] = if printable {
            b as char
        } else {
            let c = char::from_u32(next).expect("valid code point");
            next += 1;
            c
        };
    }
    table
}

fn byte_alphabet_inverse() -> HashMap<char, u8> {
    byte_alphabet().iter().enumerate().map(|(b, &c)| (c, b as u8)).collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Letter,
    Number,
    Space,
    Other,
}

fn class(c: char) -> CharClass {
    if c.is_alphabetic() {
        CharClass::Letter
    } else if c.is_numeric() {
        CharClass::Number
    } else if c.is_whitespace() {
        CharClass::Space
    } else {
        CharClass::Other
    }
}

const CONTRACTIONS: [&str; 7] = ["s", "t", "re", "ve", "m", "ll", "d"];

/// GPT-2 pre-tokenization: contractions, optionally space-prefixed runs of
/// letters / digits / other symbols, and whitespace runs that leave their
/// last space to the following word.
fn pretokenize(text: &str, mut emit: impl FnMut(&str)) {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let at = |i: usize| if i < n { chars[i].0 } else { text.len() };
    let mut i = 0;
    while i < n {
        let c = chars[i].1;
        if c == '\'' {
            let rest = &text[at(i + 1)..];
            if let Some(suffix) = CONTRACTIONS.iter().find(|s| rest.starts_with(**s)) {
                let end = i + 1 + suffix.chars().count();
                emit(&text[at(i)..at(end)]);
                i = end;
                continue;
            }
        }
        let mut j = i;
        if c == ' ' && i + 1 < n && class(chars[i + 1].1) != CharClass::Space {
            j = i + 1;
        }
        let kind = class(chars[j].1);
        if kind != CharClass::Space {
            let mut k = j + 1;
            while k < n && class(chars[k].1) == kind {
                k += 1;
            }
            emit(&text[at(i)..at(k)]);
            i = k;
            continue;
        }
        let mut k = i;
        while k < n && class(chars[k].1) == CharClass::Space {
            k += 1;
        }
        if k < n && k - i > 1 {
            emit(&text[at(i)..at(k - 1)]);
            i = k - 1;
        } else {
            emit(&text[at(i)..at(k)]);
            i = k;
        }
    }
}
