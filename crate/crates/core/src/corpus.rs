//! Corpus ingestion: line-delimited JSON documents, text normalization,
//! whitespace word segmentation with per-word script classes, and
//! per-language statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Language class of a document in the training mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LangClass {
    #[serde(rename = "ar")]
    Arabic,
    #[serde(rename = "en")]
    English,
    #[serde(rename = "mc")]
    MathCode,
    #[serde(rename = "other")]
    Other,
}

impl LangClass {
    pub const ALL: [LangClass; 4] = [
        LangClass::Arabic,
        LangClass::English,
        LangClass::MathCode,
        LangClass::Other,
    ];

    pub fn code(self) -> &'static str {
        match self {
            LangClass::Arabic => "ar",
            LangClass::English => "en",
            LangClass::MathCode => "mc",
            LangClass::Other => "other",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        LangClass::ALL.into_iter().find(|c| c.code() == code)
    }
}

impl fmt::Display for LangClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub lang: LangClass,
    pub text: String,
}

/// Text in canonical composed form with whitespace runs collapsed to one
/// ASCII space and no leading or trailing whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct NormalizedText(String);

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn len_bytes(&self) -> usize {
        self.0.len()
    }
}

impl AsRef<str> for NormalizedText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn normalize(raw: &str) -> NormalizedText {
    let composed: String = raw.nfc().collect();
    let mut out = String::with_capacity(composed.len());
    for word in composed.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    NormalizedText(out)
}

/// Like [`normalize`] but starting from raw bytes; reports the offset of the
/// first invalid UTF-8 sequence.
pub fn normalize_bytes(raw: &[u8]) -> Result<NormalizedText> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Decode {
        offset: e.valid_up_to(),
    })?;
    Ok(normalize(text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptClass {
    ArabicScript,
    LatinScript,
    Digit,
    Mixed,
    Other,
}

pub fn is_arabic_char(c: char) -> bool {
    matches!(c as u32,
        0x0600..=0x06FF
        | 0x0750..=0x077F
        | 0x0870..=0x089F
        | 0x08A0..=0x08FF
        | 0xFB50..=0xFDFF
        | 0xFE70..=0xFEFF
        | 0x10E60..=0x10E7F
        | 0x1EE00..=0x1EEFF)
}

pub fn is_latin_char(c: char) -> bool {
    matches!(c as u32,
        0x41..=0x5A
        | 0x61..=0x7A
        | 0xAA
        | 0xBA
        | 0xC0..=0xD6
        | 0xD8..=0xF6
        | 0xF8..=0x24F
        | 0x1E00..=0x1EFF
        | 0x2C60..=0x2C7F
        | 0xA720..=0xA7FF
        | 0xAB30..=0xAB6F
        | 0xFF21..=0xFF3A
        | 0xFF41..=0xFF5A)
}

/// A word is Arabic-script if it has an Arabic code point and no Latin one,
/// Latin-script in the mirrored case, mixed if it has both. Words with
/// neither are digits when they contain an ASCII digit and nothing
/// alphabetic, otherwise other.
pub fn classify_word(word: &str) -> ScriptClass {
    let mut arabic = false;
    let mut latin = false;
    let mut digit = false;
    let mut alphabetic = false;
    for c in word.chars() {
        if is_arabic_char(c) {
            arabic = true;
        } else if is_latin_char(c) {
            latin = true;
        } else if c.is_ascii_digit() {
            digit = true;
        } else if c.is_alphabetic() {
            alphabetic = true;
        }
    }
    match (arabic, latin) {
        (true, false) => ScriptClass::ArabicScript,
        (false, true) => ScriptClass::LatinScript,
        (true, true) => ScriptClass::Mixed,
        (false, false) if digit && !alphabetic => ScriptClass::Digit,
        (false, false) => ScriptClass::Other,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub script: ScriptClass,
}

/// Ordered words of one or more normalized texts. Texts are joined by a
/// single separator, so the byte size of the underlying text is the sum of
/// the word lengths plus one per gap.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordStream {
    pub words: Vec<Word>,
}

impl WordStream {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Word> {
        self.words.iter()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(|w| w.text.as_str())
    }

    pub fn text_bytes(&self) -> usize {
        let body: usize = self.words.iter().map(|w| w.text.len()).sum();
        body + self.words.len().saturating_sub(1)
    }

    pub fn text_chars(&self) -> usize {
        let body: usize = self.words.iter().map(|w| w.text.chars().count()).sum();
        body + self.words.len().saturating_sub(1)
    }

    pub fn join(&self) -> String {
        let mut out = String::with_capacity(self.text_bytes());
        for (i, w) in self.words.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&w.text);
        }
        out
    }

    /// Only the words of the given script class.
    pub fn filter_script(&self, script: ScriptClass) -> WordStream {
        WordStream {
            words: self
                .words
                .iter()
                .filter(|w| w.script == script)
                .cloned()
                .collect(),
        }
    }

    /// SHA-256 over the words, newline separated, as lowercase hex.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for w in &self.words {
            hasher.update(w.text.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    pub fn extend(&mut self, other: WordStream) {
        self.words.extend(other.words);
    }

    /// Normalizes and segments each document, concatenating in input order.
    pub fn from_documents<'a, I>(docs: I) -> WordStream
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let docs: Vec<&Document> = docs.into_iter().collect();
        let parts: Vec<Vec<Word>> = docs
            .par_iter()
            .map(|d| segment_words(&normalize(&d.text)).words)
            .collect();
        WordStream {
            words: parts.into_iter().flatten().collect(),
        }
    }
}

impl FromIterator<Word> for WordStream {
    fn from_iter<T: IntoIterator<Item = Word>>(iter: T) -> Self {
        WordStream {
            words: iter.into_iter().collect(),
        }
    }
}

pub fn segment_words(text: &NormalizedText) -> WordStream {
    text.as_str()
        .split_whitespace()
        .map(|w| Word {
            text: w.to_owned(),
            script: classify_word(w),
        })
        .collect()
}

/// Convenience for tests and callers holding loose strings: normalize then segment.
pub fn words_of(raw: &str) -> WordStream {
    segment_words(&normalize(raw))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub documents: u64,
    pub words: u64,
    pub bytes: u64,
}

impl ClassStats {
    fn merge(mut self, other: ClassStats) -> ClassStats {
        self.documents += other.documents;
        self.words += other.words;
        self.bytes += other.bytes;
        self
    }
}

/// Per-class totals; every class is present, zero when the class has no documents.
pub type CorpusStats = BTreeMap<LangClass, ClassStats>;

pub fn empty_stats() -> CorpusStats {
    LangClass::ALL
        .into_iter()
        .map(|c| (c, ClassStats::default()))
        .collect()
}

pub fn corpus_stats(docs: &[Document]) -> CorpusStats {
    docs.par_iter()
        .map(|d| {
            let text = normalize(&d.text);
            let words = segment_words(&text).len() as u64;
            let mut s = empty_stats();
            s.insert(
                d.lang,
                ClassStats {
                    documents: 1,
                    words,
                    bytes: text.len_bytes() as u64,
                },
            );
            s
        })
        .reduce(empty_stats, |mut a, b| {
            for (class, stats) in b {
                let entry = a.entry(class).or_default();
                *entry = entry.merge(stats);
            }
            a
        })
}

/// Reads line-delimited JSON documents; `.gz` files are decompressed.
pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|ext| ext == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_documents(BufReader::new(reader), &path.display().to_string())
}

pub fn parse_documents<R: BufRead>(reader: R, source: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (lineno, line) in reader.split(b'\n').enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = std::str::from_utf8(&line).map_err(|e| {
            Error::data(format!(
                "{source}:{}: invalid UTF-8 at byte offset {}",
                lineno + 1,
                e.valid_up_to()
            ))
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line)
            .map_err(|e| Error::data(format!("{source}:{}: {e}", lineno + 1)))?;
        docs.push(doc);
    }
    Ok(docs)
}
