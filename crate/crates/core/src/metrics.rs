//! Tokenizer evaluation metrics and per-stage accounting.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpe::{TokenId, Vocabulary};
use crate::corpus::WordStream;
use crate::error::{Error, Result};

/// Default Rényi order.
pub const DEFAULT_ALPHA: f64 = 2.5;

/// Rounds to four decimals, the precision metrics are reported at.
pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Average tokens per word.
pub fn fertility(total_tokens: u64, total_words: u64) -> Result<f64> {
    if total_words == 0 {
        return Err(Error::undefined("fertility of an empty corpus"));
    }
    Ok(total_tokens as f64 / total_words as f64)
}

/// Tokens per unit of text size.
pub fn compression_ratio(total_tokens: u64, total_size: u64) -> Result<f64> {
    if total_size == 0 {
        return Err(Error::undefined("compression ratio of empty text"));
    }
    Ok(total_tokens as f64 / total_size as f64)
}

/// What the compression denominator counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeUnit {
    #[default]
    Bytes,
    Chars,
}

/// Which support size normalizes the Rényi entropy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropySupport {
    /// `ln |V|`, counting tokens that never occur.
    #[default]
    FullVocab,
    /// `ln` of the number of distinct observed tokens.
    Observed,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!(
            "Rényi order must be positive, got {alpha}"
        )));
    }
    if alpha == 1.0 {
        return Err(Error::invalid(
            "Rényi order 1 (Shannon limit) is not supported",
        ));
    }
    Ok(())
}

/// Rényi entropy of order `alpha` (natural log) of the empirical
/// distribution given by `counts`. Zero counts are ignored.
pub fn renyi_entropy(counts: &[u64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let observed: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    let Some(&first) = observed.first() else {
        return Err(Error::undefined("Rényi entropy of an empty distribution"));
    };
    // A uniform distribution over n outcomes has entropy ln n for every order.
    if observed.iter().all(|&c| c == first) {
        return Ok((observed.len() as f64).ln());
    }
    let total: f64 = observed.iter().map(|&c| c as f64).sum();
    let power_sum: f64 = observed
        .iter()
        .map(|&c| (c as f64 / total).powf(alpha))
        .sum();
    Ok(power_sum.ln() / (1.0 - alpha))
}

/// Rényi entropy normalized by `ln vocab_size`, clamped to `[0, 1]`.
pub fn renyi_efficiency(counts: &[u64], vocab_size: u64, alpha: f64) -> Result<f64> {
    renyi_efficiency_with(counts, vocab_size, alpha, EntropySupport::FullVocab)
}

pub fn renyi_efficiency_with(
    counts: &[u64],
    vocab_size: u64,
    alpha: f64,
    support: EntropySupport,
) -> Result<f64> {
    let entropy = renyi_entropy(counts, alpha)?;
    let n = match support {
        EntropySupport::FullVocab => vocab_size,
        EntropySupport::Observed => counts.iter().filter(|&&c| c > 0).count() as u64,
    };
    if n < 2 {
        return Err(Error::undefined(format!(
            "Rényi efficiency needs a support of at least 2 tokens, got {n}"
        )));
    }
    Ok((entropy / (n as f64).ln()).clamp(0.0, 1.0))
}

/// Integer totals from one tokenization pass; all metrics derive from these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    pub words: u64,
    pub tokens: u64,
    pub unbroken_words: u64,
    pub bytes: u64,
    pub chars: u64,
    /// Occurrence count per token id.
    pub token_counts: Vec<u64>,
}

impl Tally {
    pub fn new(vocab_size: usize) -> Self {
        Tally {
            words: 0,
            tokens: 0,
            unbroken_words: 0,
            bytes: 0,
            chars: 0,
            token_counts: vec![0; vocab_size],
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.words += other.words;
        self.tokens += other.tokens;
        self.unbroken_words += other.unbroken_words;
        self.bytes += other.bytes;
        self.chars += other.chars;
        for (a, b) in self.token_counts.iter_mut().zip(other.token_counts) {
            *a += b;
        }
        self
    }

    /// Tokenizes `corpus` under `vocab` and accumulates the totals. Text
    /// size includes one separator between consecutive words.
    pub fn collect(corpus: &WordStream, vocab: &Vocabulary) -> Tally {
        let encoded = vocab.encode_distinct(corpus);
        let mut tally = corpus
            .words
            .par_chunks(4096)
            .map(|chunk| {
                let mut t = Tally::new(vocab.len());
                for w in chunk {
                    let ids = &encoded[w.text.as_str()];
                    t.words += 1;
                    t.tokens += ids.len() as u64;
                    t.unbroken_words += u64::from(ids.len() == 1);
                    t.bytes += w.text.len() as u64;
                    t.chars += w.text.chars().count() as u64;
                    for &id in ids {
                        t.token_counts[id as usize] += 1;
                    }
                }
                t
            })
            .reduce(|| Tally::new(vocab.len()), Tally::merge);
        let gaps = tally.words.saturating_sub(1);
        tally.bytes += gaps;
        tally.chars += gaps;
        tally
    }

    /// Occurrences of tokens introduced after `prev_stage`.
    pub fn new_token_occurrences(&self, vocab: &Vocabulary, prev_stage: u32) -> u64 {
        self.token_counts
            .iter()
            .zip(vocab.tokens())
            .filter(|(_, t)| t.stage > prev_stage)
            .map(|(&c, _)| c)
            .sum()
    }
}

/// Fraction of words that tokenize to exactly one token.
pub fn unbroken_ratio(corpus: &WordStream, vocab: &Vocabulary) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::undefined("unbroken ratio of an empty corpus"));
    }
    let tally = Tally::collect(corpus, vocab);
    Ok(tally.unbroken_words as f64 / tally.words as f64)
}

/// Share of token occurrences, under `vocab`, taken by tokens whose stage
/// is later than `prev_stage`.
pub fn new_token_occurrence_ratio(
    vocab: &Vocabulary,
    prev_stage: u32,
    corpus: &WordStream,
) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::undefined("new-token ratio of an empty corpus"));
    }
    let tally = Tally::collect(corpus, vocab);
    Ok(tally.new_token_occurrences(vocab, prev_stage) as f64 / tally.tokens as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub alpha: f64,
    pub size_unit: SizeUnit,
    pub support: EntropySupport,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            alpha: DEFAULT_ALPHA,
            size_unit: SizeUnit::Bytes,
            support: EntropySupport::FullVocab,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerReport {
    pub total_words: u64,
    pub total_tokens: u64,
    pub fertility: f64,
    pub unbroken_ratio: f64,
    pub renyi_efficiency: f64,
    pub compression_ratio: f64,
    pub alpha: f64,
}

impl TokenizerReport {
    pub fn from_tally(tally: &Tally, vocab_size: usize, opts: EvalOptions) -> Result<Self> {
        if tally.words == 0 {
            return Err(Error::undefined("evaluation of an empty corpus"));
        }
        let size = match opts.size_unit {
            SizeUnit::Bytes => tally.bytes,
            SizeUnit::Chars => tally.chars,
        };
        Ok(TokenizerReport {
            total_words: tally.words,
            total_tokens: tally.tokens,
            fertility: fertility(tally.tokens, tally.words)?,
            unbroken_ratio: tally.unbroken_words as f64 / tally.words as f64,
            renyi_efficiency: renyi_efficiency_with(
                &tally.token_counts,
                vocab_size as u64,
                opts.alpha,
                opts.support,
            )?,
            compression_ratio: compression_ratio(tally.tokens, size)?,
            alpha: opts.alpha,
        })
    }

    /// One-line JSON with ratios printed to four decimals.
    pub fn to_json_line(&self, vocab: &str) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "{{\"vocab\": {}, \"total_words\": {}, \"total_tokens\": {}, \"fertility\": {:.4}, \
             \"unbroken_ratio\": {:.4}, \"renyi_efficiency\": {:.4}, \"compression_ratio\": {:.4}, \
             \"alpha\": {}}}",
            serde_json::to_string(vocab).expect("string serializes"),
            self.total_words,
            self.total_tokens,
            self.fertility,
            self.unbroken_ratio,
            self.renyi_efficiency,
            self.compression_ratio,
            self.alpha
        );
        out
    }
}

pub fn evaluate(corpus: &WordStream, vocab: &Vocabulary, alpha: f64) -> Result<TokenizerReport> {
    evaluate_with(
        corpus,
        vocab,
        EvalOptions {
            alpha,
            ..EvalOptions::default()
        },
    )
}

pub fn evaluate_with(
    corpus: &WordStream,
    vocab: &Vocabulary,
    opts: EvalOptions,
) -> Result<TokenizerReport> {
    check_alpha(opts.alpha)?;
    if corpus.is_empty() {
        return Err(Error::undefined("evaluation of an empty corpus"));
    }
    TokenizerReport::from_tally(&Tally::collect(corpus, vocab), vocab.len(), opts)
}

/// Compression and new-token accounting for one expansion stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub vocab_size: usize,
    pub cumulative_new: u64,
    pub compression_ratio: f64,
    /// New-token occurrence share on the stage's own corpus slice.
    pub new_token_occurrence_ratio: f64,
    /// The same share measured on the held-out evaluation slice.
    pub heldout_new_token_occurrence_ratio: f64,
}

pub const STAGE_CSV_HEADER: &str = "stage,cumulative_new,compress_ratio,oov_ratio";

pub fn stage_report_csv(reports: &[StageReport]) -> String {
    let mut out = String::from(STAGE_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4}",
            r.stage, r.cumulative_new, r.compression_ratio, r.new_token_occurrence_ratio
        );
    }
    out
}

/// Occurrence count per token id for an already tokenized sequence.
pub fn count_tokens(ids: &[TokenId], vocab_size: usize) -> Vec<u64> {
    let mut counts = vec![0; vocab_size];
    for &id in ids {
        counts[id as usize] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpe::{train_base, BYTE_UNITS};
    use crate::corpus::words_of;

    #[test]
    fn fertility_values() {
        assert_eq!(
            format!("{:.4}", fertility(210_027_671, 39_006_442).unwrap()),
            "5.3844"
        );
        assert_eq!(
            format!("{:.4}", fertility(66_554_771, 39_006_442).unwrap()),
            "1.7063"
        );
        assert_eq!(fertility(10, 10).unwrap(), 1.0);
        assert!(matches!(fertility(1, 0), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn renyi_closed_forms() {
        assert_eq!(renyi_efficiency(&[7, 7, 7, 7], 4, 2.5).unwrap(), 1.0);
        assert_eq!(renyi_efficiency(&[0, 9, 0], 3, 2.5).unwrap(), 0.0);
        let expected =
            (1.0 / (1.0 - 2.5)) * (0.75f64.powf(2.5) + 0.25f64.powf(2.5)).ln() / 2f64.ln();
        let got = renyi_efficiency(&[3, 1], 2, 2.5).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.6319).abs() < 1e-4);
        assert!(matches!(
            renyi_efficiency(&[3, 1], 2, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            renyi_efficiency(&[0, 0], 2, 2.5),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(matches!(
            renyi_efficiency(&[1], 1, 2.5),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn observed_support_denominator() {
        let full = renyi_efficiency(&[3, 1, 0, 0], 4, 2.5).unwrap();
        let observed =
            renyi_efficiency_with(&[3, 1, 0, 0], 4, 2.5, EntropySupport::Observed).unwrap();
        assert!((observed - 0.6319).abs() < 1e-4);
        assert!((full - observed / 2.0).abs() < 1e-12);
    }

    #[test]
    fn compression_values() {
        assert_eq!(compression_ratio(3, 10).unwrap(), 0.3);
        assert_eq!(compression_ratio(10, 10).unwrap(), 1.0);
        assert!(compression_ratio(1, 0).is_err());
    }

    #[test]
    fn unbroken_cases() {
        let mut v = Vocabulary::from_alphabet([]);
        v.push_merge(b'a' as TokenId, b'b' as TokenId, 0);
        assert_eq!(unbroken_ratio(&words_of("ab cd"), &v).unwrap(), 0.5);
        assert_eq!(unbroken_ratio(&words_of("ab ab a"), &v).unwrap(), 1.0);
        assert_eq!(unbroken_ratio(&words_of("cd ef"), &v).unwrap(), 0.0);
        assert!(unbroken_ratio(&words_of(""), &v).is_err());
    }

    #[test]
    fn new_token_share() {
        // Stream [x, y, z_new, x]: one new token out of four.
        let mut v = Vocabulary::from_alphabet([]);
        let z = v.push_merge(b'z' as TokenId, b'z' as TokenId, 1);
        assert_eq!(v.token(z).unwrap().stage, 1);
        let ratio = new_token_occurrence_ratio(&v, 0, &words_of("x y zz x")).unwrap();
        assert_eq!(ratio, 0.25);
        assert_eq!(
            new_token_occurrence_ratio(&v, 1, &words_of("x y zz x")).unwrap(),
            0.0
        );
        assert!(new_token_occurrence_ratio(&v, 0, &words_of("")).is_err());
    }

    #[test]
    fn evaluate_single_word() {
        let corpus = words_of("ab ab");
        let v = train_base(&corpus, BYTE_UNITS + 1).unwrap().vocab;
        let r = evaluate(&words_of("ab"), &v, DEFAULT_ALPHA).unwrap();
        assert_eq!((r.total_words, r.total_tokens), (1, 1));
        assert_eq!(r.fertility, 1.0);
        assert_eq!(r.unbroken_ratio, 1.0);
        assert_eq!(r.compression_ratio, 0.5);
        assert_eq!(evaluate(&words_of("ab"), &v, DEFAULT_ALPHA).unwrap(), r);
        let line = r.to_json_line("v.json");
        assert!(line.starts_with("{\"vocab\": \"v.json\", \"total_words\": 1, \"total_tokens\": 1, \"fertility\": 1.0000"));
        let parsed: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(parsed["alpha"], 2.5);
    }

    #[test]
    fn stage_csv() {
        let r = StageReport {
            stage: 2,
            vocab_size: 300,
            cumulative_new: 1,
            compression_ratio: 0.88,
            new_token_occurrence_ratio: 0.017,
            heldout_new_token_occurrence_ratio: 0.02,
        };
        assert_eq!(
            stage_report_csv(&[r]),
            format!("{STAGE_CSV_HEADER}\n2,1,0.8800,0.0170\n")
        );
    }
}
