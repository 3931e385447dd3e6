//! Byte-pair-encoding vocabularies that grow in stages.
//!
//! A [`Vocabulary`] starts from an alphabet of the 256 byte-fallback units
//! plus every non-ASCII character seen in the base corpus, and is extended
//! by appending merge rules. Every merge creates a new token id, so the
//! token inventory is always `alphabet + merges` and ids are dense.
//! Extension never touches existing ids or ranks.

mod file;
mod train;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{NormalizedText, WordStream};
use crate::error::{Error, Result};

pub use file::{escape_surface, unescape_surface};
pub use train::{
    extend_vocab, train_base, train_from_alphabet, ExtendOptions, Extension, MIN_PAIR_COUNT,
};

pub type TokenId = u32;
pub type Pair = (TokenId, TokenId);

/// Number of byte-fallback units; they always occupy ids `0..256`.
pub const BYTE_UNITS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Raw bytes; not necessarily valid UTF-8 for byte-fallback merges.
    pub surface: Vec<u8>,
    /// Stage that introduced the token, 0 for the base vocabulary.
    pub stage: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MergeRule {
    pub left: TokenId,
    pub right: TokenId,
    pub result: TokenId,
    pub rank: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabMetadata {
    pub created_stage_targets: Vec<u64>,
    pub corpus_digest: String,
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    merges: Vec<MergeRule>,
    base_size: usize,
    metadata: VocabMetadata,
    char_ids: HashMap<char, TokenId>,
    merge_ranks: HashMap<Pair, u32>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
            && self.merges == other.merges
            && self.base_size == other.base_size
            && self.metadata == other.metadata
    }
}

impl Eq for Vocabulary {}

impl Vocabulary {
    /// Byte units followed by the distinct multi-byte characters of
    /// `chars`, sorted by code point. ASCII characters are covered by their
    /// byte unit and never get a separate token.
    pub fn from_alphabet<I: IntoIterator<Item = char>>(chars: I) -> Vocabulary {
        let mut extra: Vec<char> = chars.into_iter().filter(|c| !c.is_ascii()).collect();
        extra.sort_unstable();
        extra.dedup();
        Self::from_parts(extra, Vec::new(), VocabMetadata::default())
            .expect("sorted distinct alphabet is always valid")
    }

    /// The character alphabet of a word stream.
    pub fn alphabet_of(corpus: &WordStream) -> Vocabulary {
        let chars: std::collections::BTreeSet<char> = corpus.texts().flat_map(str::chars).collect();
        Self::from_alphabet(chars)
    }

    /// Rebuilds a vocabulary from its serialized parts, validating every
    /// structural invariant.
    pub(crate) fn from_parts(
        alphabet_chars: Vec<char>,
        merges: Vec<(TokenId, TokenId, u32)>,
        metadata: VocabMetadata,
    ) -> Result<Vocabulary> {
        let mut tokens: Vec<Token> = (0..=255u8)
            .map(|b| Token {
                surface: vec![b],
                stage: 0,
            })
            .collect();
        let mut char_ids = HashMap::with_capacity(alphabet_chars.len());
        for c in alphabet_chars {
            if c.is_ascii() {
                return Err(Error::data(format!(
                    "alphabet entry {c:?} duplicates a byte unit"
                )));
            }
            let id = tokens.len() as TokenId;
            if char_ids.insert(c, id).is_some() {
                return Err(Error::data(format!("duplicate alphabet entry {c:?}")));
            }
            tokens.push(Token {
                surface: c.to_string().into_bytes(),
                stage: 0,
            });
        }
        let mut vocab = Vocabulary {
            base_size: tokens.len(),
            tokens,
            merges: Vec::with_capacity(merges.len()),
            metadata,
            char_ids,
            merge_ranks: HashMap::with_capacity(merges.len()),
        };
        for (left, right, stage) in merges {
            let n = vocab.tokens.len() as TokenId;
            if left >= n || right >= n {
                return Err(Error::data(format!(
                    "merge {} references token not yet created ({left}, {right})",
                    vocab.merges.len()
                )));
            }
            if stage < vocab.max_stage() {
                return Err(Error::data(format!(
                    "merge {} has stage {stage} below an earlier stage",
                    vocab.merges.len()
                )));
            }
            if vocab.merge_ranks.contains_key(&(left, right)) {
                return Err(Error::data(format!("duplicate merge ({left}, {right})")));
            }
            vocab.push_merge(left, right, stage);
        }
        Ok(vocab)
    }

    pub(crate) fn push_merge(&mut self, left: TokenId, right: TokenId, stage: u32) -> TokenId {
        let result = self.tokens.len() as TokenId;
        let rank = self.merges.len() as u32;
        let mut surface = self.tokens[left as usize].surface.clone();
        surface.extend_from_slice(&self.tokens[right as usize].surface);
        self.tokens.push(Token { surface, stage });
        self.merges.push(MergeRule {
            left,
            right,
            result,
            rank,
        });
        self.merge_ranks.insert((left, right), rank);
        result
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Size of the alphabet (byte units plus base characters).
    pub fn base_size(&self) -> usize {
        self.base_size
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&Token> {
        self.tokens.get(id as usize)
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    pub fn metadata(&self) -> &VocabMetadata {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut VocabMetadata {
        &mut self.metadata
    }

    /// Multi-byte characters of the alphabet, in id order.
    pub fn alphabet_chars(&self) -> impl Iterator<Item = char> + '_ {
        self.tokens[BYTE_UNITS..self.base_size].iter().map(|t| {
            std::str::from_utf8(&t.surface)
                .ok()
                .and_then(|s| s.chars().next())
                .expect("alphabet tokens are single characters")
        })
    }

    pub fn max_stage(&self) -> u32 {
        self.tokens.last().map_or(0, |t| t.stage)
    }

    pub fn merge_rank(&self, pair: Pair) -> Option<u32> {
        self.merge_ranks.get(&pair).copied()
    }

    /// The prefix of this vocabulary containing only tokens with
    /// `stage <= max_stage`.
    pub fn truncate_to_stage(&self, max_stage: u32) -> Vocabulary {
        let keep = self
            .merges
            .iter()
            .take_while(|m| self.tokens[m.result as usize].stage <= max_stage)
            .count();
        self.truncate_merges(keep)
    }

    /// The prefix of this vocabulary with the first `n` merges.
    pub fn truncate_merges(&self, n: usize) -> Vocabulary {
        let n = n.min(self.merges.len());
        let mut out = self.clone();
        for m in &self.merges[n..] {
            out.merge_ranks.remove(&(m.left, m.right));
        }
        out.merges.truncate(n);
        out.tokens.truncate(self.base_size + n);
        out
    }

    /// True when `self` is a prefix of `other`: same alphabet, and every
    /// token and merge of `self` appears unchanged at the same id and rank.
    pub fn is_prefix_of(&self, other: &Vocabulary) -> bool {
        self.base_size == other.base_size
            && self.tokens.len() <= other.tokens.len()
            && self.tokens[..] == other.tokens[..self.tokens.len()]
            && self.merges[..] == other.merges[..self.merges.len()]
    }

    /// Character-level starting units for a byte string: alphabet characters
    /// map to their token, ASCII and anything else falls back to bytes.
    pub fn initial_units(&self, bytes: &[u8]) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(bytes.len());
        for chunk in bytes.utf8_chunks() {
            for c in chunk.valid().chars() {
                match self.char_ids.get(&c) {
                    Some(&id) => out.push(id),
                    None => {
                        let mut buf = [0u8; 4];
                        out.extend(c.encode_utf8(&mut buf).bytes().map(TokenId::from));
                    }
                }
            }
            out.extend(chunk.invalid().iter().map(|&b| TokenId::from(b)));
        }
        out
    }

    /// Applies merges in ascending rank until none applies. Each round picks
    /// the lowest-ranked adjacent pair present and merges all of its
    /// non-overlapping occurrences from left to right.
    pub fn apply_merges(&self, units: &mut Vec<TokenId>) {
        loop {
            let best = units
                .windows(2)
                .filter_map(|w| self.merge_ranks.get(&(w[0], w[1])).copied())
                .min();
            let Some(rank) = best else { break };
            let rule = self.merges[rank as usize];
            merge_pair(units, (rule.left, rule.right), rule.result);
        }
    }

    pub fn encode_word(&self, word: &[u8]) -> Vec<TokenId> {
        let mut units = self.initial_units(word);
        self.apply_merges(&mut units);
        units
    }

    /// Token ids for a normalized text, words concatenated without separators.
    pub fn tokenize(&self, text: &NormalizedText) -> Vec<TokenId> {
        self.tokenize_words(&crate::corpus::segment_words(text))
            .into_iter()
            .flatten()
            .collect()
    }

    /// Per-word tokenization of a stream. Each distinct word is encoded once.
    pub fn tokenize_words(&self, corpus: &WordStream) -> Vec<Vec<TokenId>> {
        let cache = self.encode_distinct(corpus);
        corpus.texts().map(|w| cache[w].clone()).collect()
    }

    /// Encodes every distinct word of the stream.
    pub fn encode_distinct<'a>(&self, corpus: &'a WordStream) -> HashMap<&'a str, Vec<TokenId>> {
        let mut distinct: Vec<&str> = corpus.texts().collect();
        distinct.par_sort_unstable();
        distinct.dedup();
        distinct
            .into_par_iter()
            .map(|w| (w, self.encode_word(w.as_bytes())))
            .collect()
    }

    /// Concatenated surfaces of the given ids.
    pub fn decode(&self, ids: &[TokenId]) -> Vec<u8> {
        ids.iter()
            .flat_map(|&id| self.tokens[id as usize].surface.iter().copied())
            .collect()
    }

    /// Rebuilds the normalized text from per-word tokenizations.
    pub fn detokenize_words(&self, words: &[Vec<TokenId>]) -> Vec<u8> {
        let mut out = Vec::new();
        for (i, ids) in words.iter().enumerate() {
            if i > 0 {
                out.push(b' ');
            }
            out.extend(self.decode(ids));
        }
        out
    }
}

/// Replaces every non-overlapping occurrence of `pair`, scanning left to
/// right, with `result`.
pub(crate) fn merge_pair(units: &mut Vec<TokenId>, pair: Pair, result: TokenId) -> bool {
    let mut changed = false;
    let mut write = 0;
    let mut read = 0;
    while read < units.len() {
        if read + 1 < units.len() && units[read] == pair.0 && units[read + 1] == pair.1 {
            units[write] = result;
            read += 2;
            changed = true;
        } else {
            units[write] = units[read];
            read += 1;
        }
        write += 1;
    }
    units.truncate(write);
    changed
}

/// Adjacent-pair occurrence counts over a tokenized word stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairStats {
    counts: HashMap<Pair, u64>,
}

impl PairStats {
    pub fn get(&self, pair: Pair) -> u64 {
        self.counts.get(&pair).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pair, u64)> + '_ {
        self.counts.iter().map(|(&p, &c)| (p, c))
    }

    /// Pairs sorted by descending count, then by id.
    pub fn sorted(&self) -> Vec<(Pair, u64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

pub fn pair_frequencies(vocab: &Vocabulary, corpus: &WordStream) -> PairStats {
    let encoded = vocab.encode_distinct(corpus);
    let mut word_counts: HashMap<&str, u64> = HashMap::new();
    for w in corpus.texts() {
        *word_counts.entry(w).or_default() += 1;
    }
    let counts = word_counts
        .par_iter()
        .fold(HashMap::new, |mut acc: HashMap<Pair, u64>, (w, &n)| {
            for pair in encoded[w].windows(2) {
                *acc.entry((pair[0], pair[1])).or_default() += n;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    PairStats { counts }
}
