//! Initialization of embeddings for newly added tokens.
//!
//! Each new token is decomposed into tokens of an earlier vocabulary (the
//! stage-0 base by default) and its embedding row is set to the mean of the
//! constituent rows.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bpe::{Token, TokenId, Vocabulary};
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"VEXPEMB1";

/// Row-major matrix of 32-bit embeddings, one row per token id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding width must be >= 1"));
        }
        if data.len() != rows * dim {
            return Err(Error::invalid(format!(
                "expected {rows} x {dim} = {} values, got {}",
                rows * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(EmbeddingMatrix { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, id: usize) -> &[f32] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Little-endian exchange format: magic, `u32` rows, `u32` dim, then
    /// `rows * dim` `f32` values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.data.len() * 4);
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != EMBEDDING_MAGIC {
            return Err(Error::data("not a VEXPEMB1 embedding file"));
        }
        let rows = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let dim = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() != rows * dim * 4 {
            return Err(Error::data(format!(
                "embedding file declares {rows} x {dim} but holds {} bytes of data",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        EmbeddingMatrix::new(rows, dim, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        EmbeddingMatrix::from_bytes(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub new_id: TokenId,
    pub constituents: Vec<TokenId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitPlan {
    pub entries: Vec<PlanEntry>,
}

impl InitPlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One `{"new_id":..,"constituents":[..]}` object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("plan entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| Error::data(format!("plan line {}: {e}", i + 1)))
            })
            .collect::<Result<_>>()?;
        Ok(InitPlan { entries })
    }
}

/// Which vocabulary new tokens are decomposed against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecomposeBasis {
    /// The stage-0 prefix of the old vocabulary.
    #[default]
    Base,
    /// The whole old vocabulary.
    Previous,
}

/// Tokenization of the token's surface under `base`.
pub fn decompose(token: &Token, base: &Vocabulary) -> Vec<TokenId> {
    base.encode_word(&token.surface)
}

/// One entry per token of `new` that is not in `old`, in id order.
pub fn make_plan(old: &Vocabulary, new: &Vocabulary, basis: DecomposeBasis) -> Result<InitPlan> {
    if !old.is_prefix_of(new) {
        return Err(Error::invalid(
            "new vocabulary is not an extension of the old one",
        ));
    }
    let base = match basis {
        DecomposeBasis::Base => old.truncate_to_stage(0),
        DecomposeBasis::Previous => old.clone(),
    };
    let entries = new.tokens()[old.len()..]
        .iter()
        .enumerate()
        .map(|(i, tok)| PlanEntry {
            new_id: (old.len() + i) as TokenId,
            constituents: decompose(tok, &base),
        })
        .collect();
    Ok(InitPlan { entries })
}

/// Returns a matrix whose rows for the plan's ids are the means of their
/// constituent rows. Other rows are copied unchanged. The plan ids must
/// form a contiguous range starting at or before the end of `m`.
pub fn apply_plan(m: &EmbeddingMatrix, plan: &InitPlan) -> Result<EmbeddingMatrix> {
    if plan.is_empty() {
        return Ok(m.clone());
    }
    let mut entries: Vec<&PlanEntry> = plan.entries.iter().collect();
    entries.sort_by_key(|e| e.new_id);
    let first = entries[0].new_id as usize;
    for (k, e) in entries.iter().enumerate() {
        if e.new_id as usize != first + k {
            return Err(Error::invalid(format!(
                "plan ids must be contiguous; expected {} but found {}",
                first + k,
                e.new_id
            )));
        }
    }
    if first > m.rows {
        return Err(Error::invalid(format!(
            "plan starts at row {first} but the matrix has only {} rows",
            m.rows
        )));
    }
    let rows = m.rows.max(first + entries.len());
    let dim = m.dim;
    let mut data = Vec::with_capacity(rows * dim);
    data.extend_from_slice(&m.data[..first * dim]);
    let mut acc = vec![0f64; dim];
    for e in &entries {
        if e.constituents.is_empty() {
            return Err(Error::invalid(format!(
                "token {} has no constituents",
                e.new_id
            )));
        }
        acc.iter_mut().for_each(|a| *a = 0.0);
        for &c in &e.constituents {
            if c as usize >= first {
                return Err(Error::invalid(format!(
                    "constituent {c} of token {} has no existing row",
                    e.new_id
                )));
            }
            for (a, &v) in acc.iter_mut().zip(m.row(c as usize)) {
                *a += f64::from(v);
            }
        }
        let n = e.constituents.len() as f64;
        data.extend(acc.iter().map(|a| (a / n) as f32));
    }
    if rows > first + entries.len() {
        data.extend_from_slice(&m.data[(first + entries.len()) * dim..]);
    }
    EmbeddingMatrix::new(rows, dim, data)
}
