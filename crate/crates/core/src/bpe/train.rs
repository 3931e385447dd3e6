use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use log::{debug, warn};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{merge_pair, Pair, TokenId, Vocabulary};
use crate::corpus::{ScriptClass, WordStream};
use crate::error::{Error, Result};

/// Pairs seen fewer times than this are never merged.
pub const MIN_PAIR_COUNT: u64 = 2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtendOptions {
    /// When set, pair statistics only come from words of this script class.
    pub only_script: Option<ScriptClass>,
}

impl ExtendOptions {
    pub fn arabic_only() -> Self {
        ExtendOptions {
            only_script: Some(ScriptClass::ArabicScript),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extension {
    pub vocab: Vocabulary,
    /// Set when the corpus ran out of eligible pairs before the target size.
    pub exhausted: bool,
}

/// Learns a base vocabulary: the corpus alphabet followed by merges up to
/// `target_size` tokens, all tagged stage 0.
pub fn train_base(corpus: &WordStream, target_size: usize) -> Result<Extension> {
    train_from_alphabet(Vocabulary::alphabet_of(corpus), corpus, target_size)
}

/// Like [`train_base`] but with a caller-supplied alphabet, so merges can be
/// learned on a subset of the text the alphabet was drawn from.
pub fn train_from_alphabet(
    mut vocab: Vocabulary,
    corpus: &WordStream,
    target_size: usize,
) -> Result<Extension> {
    if !vocab.merges().is_empty() {
        return Err(Error::invalid("alphabet vocabulary already has merges"));
    }
    if target_size < vocab.len() {
        return Err(Error::invalid(format!(
            "target size {target_size} is below the alphabet size {}",
            vocab.len()
        )));
    }
    vocab.metadata_mut().corpus_digest = corpus.digest();
    vocab.metadata_mut().created_stage_targets = vec![target_size as u64];
    grow(vocab, corpus, target_size, 0, ExtendOptions::default())
}

/// Resumes merge learning from `vocab` until it holds `target_size`
/// tokens. Pair statistics are recomputed over `corpus` tokenized with the
/// current merges, so extending in several steps on one corpus learns the
/// same merges as a single run to the final size.
pub fn extend_vocab(
    vocab: &Vocabulary,
    corpus: &WordStream,
    target_size: usize,
    stage: u32,
    opts: ExtendOptions,
) -> Result<Extension> {
    if target_size < vocab.len() {
        return Err(Error::invalid(format!(
            "target size {target_size} is below the current size {}",
            vocab.len()
        )));
    }
    if stage <= vocab.max_stage() {
        return Err(Error::invalid(format!(
            "stage {stage} must exceed the existing maximum stage {}",
            vocab.max_stage()
        )));
    }
    let mut next = vocab.clone();
    let meta = next.metadata_mut();
    meta.created_stage_targets.push(target_size as u64);
    let mut hasher = Sha256::new();
    hasher.update(meta.corpus_digest.as_bytes());
    hasher.update(corpus.digest().as_bytes());
    meta.corpus_digest = hex::encode(hasher.finalize());
    grow(next, corpus, target_size, stage, opts)
}

#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: Vec<u8>,
    right: Vec<u8>,
    pair: Pair,
}

impl Ord for Candidate {
    // Max-heap order: highest count, then smallest (left, right) surfaces by
    // byte order, then smallest ids.
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn candidate(vocab: &Vocabulary, pair: Pair, count: u64) -> Candidate {
    Candidate {
        count,
        left: vocab.tokens[pair.0 as usize].surface.clone(),
        right: vocab.tokens[pair.1 as usize].surface.clone(),
        pair,
    }
}

fn grow(
    mut vocab: Vocabulary,
    corpus: &WordStream,
    target_size: usize,
    stage: u32,
    opts: ExtendOptions,
) -> Result<Extension> {
    if vocab.len() >= target_size {
        return Ok(Extension {
            vocab,
            exhausted: false,
        });
    }

    let mut word_freqs: HashMap<&str, u64> = HashMap::new();
    for w in corpus.iter() {
        if opts.only_script.is_none_or(|s| s == w.script) {
            *word_freqs.entry(w.text.as_str()).or_default() += 1;
        }
    }
    let mut distinct: Vec<(&str, u64)> = word_freqs.into_iter().collect();
    distinct.sort_unstable();
    let words: Vec<Vec<TokenId>> = distinct
        .par_iter()
        .map(|(w, _)| vocab.encode_word(w.as_bytes()))
        .collect();
    let freqs: Vec<u64> = distinct.iter().map(|&(_, f)| f).collect();

    let mut counts: HashMap<Pair, u64> = HashMap::new();
    let mut occurs_in: HashMap<Pair, Vec<u32>> = HashMap::new();
    for (idx, (units, &freq)) in words.iter().zip(&freqs).enumerate() {
        for w in units.windows(2) {
            let pair = (w[0], w[1]);
            *counts.entry(pair).or_default() += freq;
            let list = occurs_in.entry(pair).or_default();
            if list.last() != Some(&(idx as u32)) {
                list.push(idx as u32);
            }
        }
    }

    let mut exhausted = false;
    let mut words = words;
    let mut heap: BinaryHeap<Candidate> = counts
        .iter()
        .filter(|&(_, &c)| c >= MIN_PAIR_COUNT)
        .map(|(&p, &c)| candidate(&vocab, p, c))
        .collect();

    while vocab.len() < target_size {
        let best = loop {
            match heap.pop() {
                None => break None,
                Some(c) if counts.get(&c.pair) == Some(&c.count) => break Some(c),
                Some(_) => continue,
            }
        };
        let Some(best) = best.filter(|c| c.count >= MIN_PAIR_COUNT) else {
            exhausted = true;
            break;
        };

        let pair = best.pair;
        let new_id = vocab.push_merge(pair.0, pair.1, stage);
        debug!(
            "merge {} ({}, {}) -> {new_id} count {}",
            vocab.merges().len() - 1,
            pair.0,
            pair.1,
            best.count
        );

        let sites = occurs_in.remove(&pair).unwrap_or_default();
        let mut touched: BTreeSet<Pair> = BTreeSet::new();
        for idx in sites {
            let units = &mut words[idx as usize];
            if !units.windows(2).any(|w| (w[0], w[1]) == pair) {
                continue;
            }
            let freq = freqs[idx as usize];
            for w in units.windows(2) {
                let p = (w[0], w[1]);
                let c = counts.get_mut(&p).expect("pair counted");
                *c -= freq;
                touched.insert(p);
            }
            merge_pair(units, pair, new_id);
            for w in units.windows(2) {
                let p = (w[0], w[1]);
                *counts.entry(p).or_default() += freq;
                touched.insert(p);
                if p.0 == new_id || p.1 == new_id {
                    let list = occurs_in.entry(p).or_default();
                    if list.last() != Some(&idx) {
                        list.push(idx);
                    }
                }
            }
        }
        for p in touched {
            match counts.get(&p).copied() {
                Some(0) => {
                    counts.remove(&p);
                    occurs_in.remove(&p);
                }
                Some(c) if c >= MIN_PAIR_COUNT => heap.push(candidate(&vocab, p, c)),
                _ => {}
            }
        }
    }

    if exhausted {
        warn!(
            "corpus exhausted eligible pairs at {} tokens (target {target_size})",
            vocab.len()
        );
    }
    Ok(Extension { vocab, exhausted })
}
