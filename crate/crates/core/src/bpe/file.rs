//! Vocabulary file: UTF-8 JSON with a fixed layout.
//!
//! ```text
//! {
//!   "base_alphabet": [ "<surface>", ... ],
//!   "merges": [
//!     {"left":L,"right":R,"rank":K,"stage":S},
//!     ...
//!   ],
//!   "metadata": {"created_stage_targets":[...],"corpus_digest":"..."}
//! }
//! ```
//!
//! Surfaces are written through [`escape_surface`]: a backslash becomes
//! `\\`, control characters become `\uXXXX` and bytes that are not valid
//! UTF-8 become `\xNN`. The writer output is canonical, so loading a file
//! and saving it again reproduces it byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TokenId, VocabMetadata, Vocabulary, BYTE_UNITS};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct MergeRecord {
    left: TokenId,
    right: TokenId,
    rank: u32,
    stage: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabFile {
    base_alphabet: Vec<String>,
    merges: Vec<MergeRecord>,
    metadata: VocabMetadata,
}

pub fn escape_surface(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len());
    for chunk in bytes.utf8_chunks() {
        for c in chunk.valid().chars() {
            match c {
                '\\' => out.push_str("\\\\"),
                c if c.is_control() => {
                    let _ = write!(out, "\\u{:04X}", c as u32);
                }
                c => out.push(c),
            }
        }
        for b in chunk.invalid() {
            let _ = write!(out, "\\x{b:02X}");
        }
    }
    out
}

pub fn unescape_surface(text: &str) -> Result<Vec<u8>> {
    let bad = || Error::data(format!("malformed surface escape in {text:?}"));
    let mut out = Vec::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            let mut buf = [0u8; 4];
            out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            continue;
        }
        match chars.next().ok_or_else(bad)? {
            '\\' => out.push(b'\\'),
            'x' => {
                let hex: String = chars.by_ref().take(2).collect();
                let b = u8::from_str_radix(&hex, 16).map_err(|_| bad())?;
                if hex.len() != 2 {
                    return Err(bad());
                }
                out.push(b);
            }
            'u' => {
                let hex: String = chars.by_ref().take(4).collect();
                let cp = u32::from_str_radix(&hex, 16).map_err(|_| bad())?;
                let c = char::from_u32(cp)
                    .filter(|_| hex.len() == 4)
                    .ok_or_else(bad)?;
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
            _ => return Err(bad()),
        }
    }
    Ok(out)
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

impl Vocabulary {
    pub fn to_json(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n  \"base_alphabet\": [");
        for (i, tok) in self.tokens[..self.base_size].iter().enumerate() {
            out.push_str(if i == 0 { "\n    " } else { ",\n    " });
            out.push_str(&json_string(&escape_surface(&tok.surface)));
        }
        out.push_str("\n  ],\n  \"merges\": [");
        for (i, m) in self.merges.iter().enumerate() {
            out.push_str(if i == 0 { "\n    " } else { ",\n    " });
            let rec = MergeRecord {
                left: m.left,
                right: m.right,
                rank: m.rank,
                stage: self.tokens[m.result as usize].stage,
            };
            out.push_str(&serde_json::to_string(&rec).expect("merge record serializes"));
        }
        if !self.merges.is_empty() {
            out.push_str("\n  ");
        }
        out.push_str("],\n  \"metadata\": ");
        out.push_str(&serde_json::to_string(&self.metadata).expect("metadata serializes"));
        out.push_str("\n}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Vocabulary> {
        let file: VocabFile =
            serde_json::from_str(text).map_err(|e| Error::data(format!("vocabulary file: {e}")))?;
        if file.base_alphabet.len() < BYTE_UNITS {
            return Err(Error::data(format!(
                "base alphabet has {} entries, expected at least {BYTE_UNITS} byte units",
                file.base_alphabet.len()
            )));
        }
        for (b, entry) in file.base_alphabet[..BYTE_UNITS].iter().enumerate() {
            if unescape_surface(entry)? != [b as u8] {
                return Err(Error::data(format!(
                    "base alphabet entry {b} must be the byte unit 0x{b:02X}"
                )));
            }
        }
        let mut chars = Vec::with_capacity(file.base_alphabet.len() - BYTE_UNITS);
        for entry in &file.base_alphabet[BYTE_UNITS..] {
            let bytes = unescape_surface(entry)?;
            let c = std::str::from_utf8(&bytes)
                .ok()
                .and_then(|s| {
                    let mut it = s.chars();
                    it.next().filter(|_| it.next().is_none())
                })
                .ok_or_else(|| {
                    Error::data(format!(
                        "base alphabet entry {entry:?} is not one character"
                    ))
                })?;
            chars.push(c);
        }
        let mut merges = Vec::with_capacity(file.merges.len());
        for (i, m) in file.merges.iter().enumerate() {
            if m.rank as usize != i {
                return Err(Error::data(format!(
                    "merge at position {i} has rank {}; ranks must be dense",
                    m.rank
                )));
            }
            merges.push((m.left, m.right, m.stage));
        }
        Vocabulary::from_parts(chars, merges, file.metadata)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_json(&text)
    }
}
