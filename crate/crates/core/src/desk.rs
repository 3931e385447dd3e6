//! Seeded synthetic corpora for desk-scale runs.
//!
//! Arabic-like words are built from three-letter roots poured into
//! derivational templates, then wrapped in common proclitics and suffixes.
//! Roots, templates and affixes are drawn from Zipf-like distributions, so
//! frequent affixes and stems give BPE realistic structure to find.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, LangClass};

const ARABIC_LETTERS: &[char] = &[
    'ا', 'ب', 'ت', 'ث', 'ج', 'ح', 'خ', 'د', 'ذ', 'ر', 'ز', 'س', 'ش', 'ص', 'ض', 'ط', 'ظ', 'ع', 'غ',
    'ف', 'ق', 'ك', 'ل', 'م', 'ن', 'ه', 'و', 'ي',
];

// `1`, `2`, `3` stand for the root consonants.
const TEMPLATES: &[&str] = &[
    "123",
    "1ا23",
    "م12و3",
    "ت12ي3",
    "12ا3",
    "م1ا23",
    "ا1ت23",
    "است123",
    "1و23",
    "م123",
];
const PREFIXES: &[&str] = &["", "ال", "و", "وال", "ب", "بال", "ل", "ف", "لل", "س"];
const SUFFIXES: &[&str] = &["", "ة", "ات", "ون", "ين", "ها", "هم", "ي", "نا", "ان"];

const LATIN_ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "s", "t", "w", "st", "tr", "pl", "ch",
];
const LATIN_VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ea", "ou"];
const LATIN_CODAS: &[&str] = &["", "n", "r", "s", "t", "nd", "ng", "ll"];
const CODE_WORDS: &[&str] = &[
    "def",
    "return",
    "x",
    "y",
    "i",
    "for",
    "in",
    "range(n):",
    "if",
    "else:",
    "=",
    "+",
    "==",
    "print(x)",
    "let",
    "fn",
    "0",
    "1",
    "2",
    "10",
    "f(x)",
    "sum",
    "\\frac{a}{b}",
    "x^2",
    "mod",
];

/// Zipf weights `1 / rank^s` for `n` ranks.
fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / (r as f64).powf(s))).expect("positive weights")
}

struct ArabicLexicon {
    roots: Vec<[char; 3]>,
    root_dist: WeightedIndex<f64>,
    template_dist: WeightedIndex<f64>,
    prefix_dist: WeightedIndex<f64>,
    suffix_dist: WeightedIndex<f64>,
}

impl ArabicLexicon {
    fn new(rng: &mut ChaCha8Rng, roots: usize) -> Self {
        let roots: Vec<[char; 3]> = (0..roots)
            .map(|_| {
                let mut pick = || *ARABIC_LETTERS.choose(rng).expect("letters");
                [pick(), pick(), pick()]
            })
            .collect();
        ArabicLexicon {
            root_dist: zipf(roots.len(), 1.05),
            roots,
            template_dist: zipf(TEMPLATES.len(), 0.9),
            prefix_dist: zipf(PREFIXES.len(), 0.8),
            suffix_dist: zipf(SUFFIXES.len(), 0.8),
        }
    }

    fn word(&self, rng: &mut ChaCha8Rng) -> String {
        let root = self.roots[self.root_dist.sample(rng)];
        let mut w = String::from(PREFIXES[self.prefix_dist.sample(rng)]);
        for c in TEMPLATES[self.template_dist.sample(rng)].chars() {
            match c {
                '1' => w.push(root[0]),
                '2' => w.push(root[1]),
                '3' => w.push(root[2]),
                c => w.push(c),
            }
        }
        w.push_str(SUFFIXES[self.suffix_dist.sample(rng)]);
        w
    }
}

fn latin_lexicon(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    (0..size)
        .map(|_| {
            let syllables = rng.gen_range(1..=3);
            (0..syllables)
                .map(|_| {
                    format!(
                        "{}{}{}",
                        LATIN_ONSETS.choose(rng).expect("onsets"),
                        LATIN_VOWELS.choose(rng).expect("vowels"),
                        LATIN_CODAS.choose(rng).expect("codas")
                    )
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeskCorpusSpec {
    pub seed: u64,
    pub arabic_words: usize,
    pub english_words: usize,
    pub math_code_words: usize,
    /// Words per document.
    pub doc_words: usize,
}

impl Default for DeskCorpusSpec {
    fn default() -> Self {
        DeskCorpusSpec {
            seed: 7,
            arabic_words: 120_000,
            english_words: 60_000,
            math_code_words: 10_000,
            doc_words: 80,
        }
    }
}

/// Generates documents of all three mixture classes, deterministic in `spec`.
pub fn synthetic_corpus(spec: DeskCorpusSpec) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let arabic = ArabicLexicon::new(&mut rng, 600);
    let latin = latin_lexicon(&mut rng, 3_000);
    let latin_dist = zipf(latin.len(), 1.0);
    let code_dist = zipf(CODE_WORDS.len(), 0.7);
    let doc_words = spec.doc_words.max(1);

    let mut docs = Vec::new();
    let mut emit = |lang: LangClass,
                    total: usize,
                    rng: &mut ChaCha8Rng,
                    next: &dyn Fn(&mut ChaCha8Rng) -> String| {
        let mut remaining = total;
        let mut n = 0;
        while remaining > 0 {
            let len = remaining.min(doc_words);
            let words: Vec<String> = (0..len).map(|_| next(rng)).collect();
            docs.push(Document {
                id: format!("{}-{n:05}", lang.code()),
                lang,
                text: words.join(" "),
            });
            remaining -= len;
            n += 1;
        }
    };
    emit(LangClass::Arabic, spec.arabic_words, &mut rng, &|r| {
        arabic.word(r)
    });
    emit(LangClass::English, spec.english_words, &mut rng, &|r| {
        latin[latin_dist.sample(r)].clone()
    });
    emit(LangClass::MathCode, spec.math_code_words, &mut rng, &|r| {
        CODE_WORDS[code_dist.sample(r)].to_owned()
    });
    docs
}

/// Documents of one class as JSON lines.
pub fn to_jsonl<'a, I: IntoIterator<Item = &'a Document>>(docs: I) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("document serializes"));
        out.push('\n');
    }
    out
}
