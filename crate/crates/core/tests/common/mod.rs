//! Test oracles and shared checks. The reference implementations favour
//! obviousness over speed and share no code with the library.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use vexp_core::bpe::{extend_vocab, train_base, ExtendOptions, Vocabulary};
use vexp_core::corpus::{words_of, WordStream};
use vexp_core::embed_init::{apply_plan, EmbeddingMatrix, InitPlan, PlanEntry};

/// Straightforward BPE: full recount of every adjacent pair per merge.
pub struct NaiveBpe {
    /// Non-ASCII alphabet characters in code point order; ids start at 256.
    pub chars: Vec<char>,
    pub surfaces: Vec<Vec<u8>>,
    pub merges: Vec<(u32, u32)>,
}

impl NaiveBpe {
    pub fn alphabet(words: &[String]) -> NaiveBpe {
        let mut chars: Vec<char> = words
            .iter()
            .flat_map(|w| w.chars())
            .filter(|c| !c.is_ascii())
            .collect();
        chars.sort();
        chars.dedup();
        let mut surfaces: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        for c in &chars {
            surfaces.push(c.to_string().into_bytes());
        }
        NaiveBpe {
            chars,
            surfaces,
            merges: Vec::new(),
        }
    }

    pub fn units(&self, word: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for c in word.chars() {
            match self.chars.iter().position(|&x| x == c) {
                Some(i) => out.push(256 + i as u32),
                None => out.extend(c.to_string().bytes().map(u32::from)),
            }
        }
        out
    }

    /// Learns merges on `words` until there are `target` tokens.
    pub fn train(&mut self, words: &[String], target: usize) {
        let mut seqs: Vec<Vec<u32>> = words.iter().map(|w| self.tokenize(w)).collect();
        while self.surfaces.len() < target {
            let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
            for s in &seqs {
                for i in 1..s.len() {
                    *counts.entry((s[i - 1], s[i])).or_insert(0) += 1;
                }
            }
            let mut best: Option<((u32, u32), u64)> = None;
            for (&pair, &count) in &counts {
                if count < 2 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bp, bc)) => {
                        count > bc
                            || (count == bc && {
                                let a = (
                                    &self.surfaces[pair.0 as usize],
                                    &self.surfaces[pair.1 as usize],
                                );
                                let b =
                                    (&self.surfaces[bp.0 as usize], &self.surfaces[bp.1 as usize]);
                                a < b || (a == b && pair < bp)
                            })
                    }
                };
                if better {
                    best = Some((pair, count));
                }
            }
            let Some((pair, _)) = best else { break };
            let id = self.surfaces.len() as u32;
            let mut surface = self.surfaces[pair.0 as usize].clone();
            surface.extend_from_slice(&self.surfaces[pair.1 as usize]);
            self.surfaces.push(surface);
            self.merges.push(pair);
            for s in &mut seqs {
                *s = replace(s, pair, id);
            }
        }
    }

    /// Applies every merge once, in the order learned.
    pub fn tokenize(&self, word: &str) -> Vec<u32> {
        let mut seq = self.units(word);
        for (rank, &pair) in self.merges.iter().enumerate() {
            seq = replace(&seq, pair, 256 + self.chars.len() as u32 + rank as u32);
        }
        seq
    }
}

fn replace(seq: &[u32], pair: (u32, u32), id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(seq.len());
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len() && (seq[i], seq[i + 1]) == pair {
            out.push(id);
            i += 2;
        } else {
            out.push(seq[i]);
            i += 1;
        }
    }
    out
}

/// A small random corpus: at most `max_words` words over an alphabet of at
/// most `max_alphabet` characters mixing Latin and Arabic letters.
pub fn random_corpus<R: Rng>(rng: &mut R, max_words: usize, max_alphabet: usize) -> Vec<String> {
    const POOL: &[char] = &['a', 'b', 'c', 'd', 'e', 'ك', 'ت', 'ب', 'ل', 'م', 'ن'];
    let size = rng.gen_range(1..=max_alphabet.min(POOL.len()));
    let alphabet: Vec<char> = POOL.choose_multiple(rng, size).copied().collect();
    // A few stems reused with random edits give realistic repetition.
    let stems: Vec<String> = (0..rng.gen_range(1..=6))
        .map(|_| {
            (0..rng.gen_range(1..=6))
                .map(|_| *alphabet.choose(rng).unwrap())
                .collect()
        })
        .collect();
    (0..rng.gen_range(1..=max_words))
        .map(|_| {
            let mut w = stems.choose(rng).unwrap().clone();
            if rng.gen_bool(0.4) {
                w.push(*alphabet.choose(rng).unwrap());
            }
            if rng.gen_bool(0.2) {
                w.insert(0, *alphabet.choose(rng).unwrap());
            }
            w
        })
        .collect()
}

/// Rényi entropy of order `alpha` in nats, straight from the definition.
pub fn renyi_reference(counts: &[u64], alpha: f64) -> f64 {
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    let s: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| (c as f64 / total).powf(alpha))
        .sum();
    s.ln() / (1.0 - alpha)
}

/// Recursively lists files under `dir` with their contents, sorted by path.
pub fn snapshot(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

pub fn stream(words: &[String]) -> WordStream {
    words_of(&words.join(" "))
}

pub fn merge_pairs(v: &Vocabulary) -> Vec<(u32, u32)> {
    v.merges().iter().map(|m| (m.left, m.right)).collect()
}

/// Trains on `instances` random corpora and compares merges, surfaces and
/// token streams with [`NaiveBpe`].
pub fn check_bpe_oracle(instances: usize, seed: u64) -> Result<(), String> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for n in 0..instances {
        let words = random_corpus(&mut rng, 200, 8);
        let mut naive = NaiveBpe::alphabet(&words);
        let target = naive.surfaces.len() + rng.gen_range(0..40);
        naive.train(&words, target);
        let trained = train_base(&stream(&words), target)
            .map_err(|e| e.to_string())?
            .vocab;
        if merge_pairs(&trained) != naive.merges {
            return Err(format!("instance {n}: merge lists differ on {words:?}"));
        }
        if trained
            .tokens()
            .iter()
            .map(|t| &t.surface)
            .ne(naive.surfaces.iter())
        {
            return Err(format!("instance {n}: token surfaces differ"));
        }
        let probe = random_corpus(&mut rng, 50, 8);
        for w in words.iter().chain(&probe) {
            if trained.encode_word(w.as_bytes()) != naive.tokenize(w) {
                return Err(format!("instance {n}: token streams differ on {w:?}"));
            }
        }
    }
    Ok(())
}

/// Chains extensions through random monotone targets and compares with a
/// single extension to the final size.
pub fn check_staged_equivalence(instances: usize, seed: u64) -> Result<(), String> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let opts = ExtendOptions::default();
    for n in 0..instances {
        let corpus = stream(&random_corpus(&mut rng, 200, 8));
        let base = Vocabulary::alphabet_of(&corpus);
        let final_size = base.len() + rng.gen_range(1..50);
        let once = extend_vocab(&base, &corpus, final_size, 1, opts).map_err(|e| e.to_string())?;
        let mut v = base;
        let mut stage = 1;
        loop {
            let next = (v.len() + rng.gen_range(0..8)).min(final_size);
            let ext = extend_vocab(&v, &corpus, next, stage, opts).map_err(|e| e.to_string())?;
            if !v.is_prefix_of(&ext.vocab) {
                return Err(format!("instance {n}: stage {stage} is not an extension"));
            }
            v = ext.vocab;
            stage += 1;
            if ext.exhausted || v.len() >= final_size {
                break;
            }
        }
        if merge_pairs(&v) != merge_pairs(&once.vocab) {
            return Err(format!("instance {n}: staged and single-run merges differ"));
        }
    }
    Ok(())
}

/// Applies random plans and checks every new row against an independently
/// computed mean, the bounding box of its constituents, the norm bound and
/// exact copies for single constituents.
pub fn check_embedding_plans(instances: usize, seed: u64) -> Result<(), String> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for n in 0..instances {
        let rows = rng.gen_range(1..40);
        let dim = rng.gen_range(1..17);
        let data: Vec<f32> = (0..rows * dim)
            .map(|_| rng.gen_range(-3.0f32..3.0))
            .collect();
        let m = EmbeddingMatrix::new(rows, dim, data).map_err(|e| e.to_string())?;
        let first = rng.gen_range(1..=rows);
        let count = rng.gen_range(1..10);
        let mut entries: Vec<PlanEntry> = (0..count)
            .map(|k| {
                let len = if rng.gen_bool(0.2) {
                    1
                } else {
                    rng.gen_range(1..7)
                };
                PlanEntry {
                    new_id: (first + k) as u32,
                    constituents: (0..len).map(|_| rng.gen_range(0..first) as u32).collect(),
                }
            })
            .collect();
        entries.shuffle(&mut rng);
        let plan = InitPlan { entries };
        let out = apply_plan(&m, &plan).map_err(|e| e.to_string())?;
        if out.rows() != rows.max(first + count) {
            return Err(format!("plan {n}: wrong row count {}", out.rows()));
        }
        for id in 0..first {
            if out.row(id) != m.row(id) {
                return Err(format!("plan {n}: existing row {id} changed"));
            }
        }
        for e in &plan.entries {
            let got = out.row(e.new_id as usize);
            let parts: Vec<&[f32]> = e.constituents.iter().map(|&c| m.row(c as usize)).collect();
            if parts.len() == 1 && got != parts[0] {
                return Err(format!("plan {n}: single constituent not copied exactly"));
            }
            for j in 0..dim {
                let mean = parts.iter().map(|p| p[j] as f64).sum::<f64>() / parts.len() as f64;
                let err = (got[j] as f64 - mean).abs();
                if err > 1e-6 * mean.abs() + f64::from(f32::MIN_POSITIVE) {
                    return Err(format!(
                        "plan {n}: token {} col {j}: {} vs {mean}",
                        e.new_id, got[j]
                    ));
                }
                let lo = parts.iter().map(|p| p[j]).fold(f32::INFINITY, f32::min);
                let hi = parts.iter().map(|p| p[j]).fold(f32::NEG_INFINITY, f32::max);
                if got[j] < lo || got[j] > hi {
                    return Err(format!(
                        "plan {n}: token {} leaves the constituent hull",
                        e.new_id
                    ));
                }
            }
            let norm = |v: &[f32]| v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            let max_norm = parts.iter().map(|p| norm(p)).fold(0.0, f64::max);
            if norm(got) > max_norm * (1.0 + 1e-6) {
                return Err(format!(
                    "plan {n}: token {} norm exceeds its constituents",
                    e.new_id
                ));
            }
        }
    }
    Ok(())
}
