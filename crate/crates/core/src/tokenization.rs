//! WordPiece tokenization for token counting and length statistics.
//!
//! Follows the BERT reference pipeline: text cleanup, CJK isolation,
//! lower-casing with accent stripping, punctuation splitting, then greedy
//! longest-match-first subword lookup with a `##` continuation prefix.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::get_general_category;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::LabeledSentence;

pub const UNK_TOKEN: &str = "[UNK]";
pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";
pub const PAD_TOKEN: &str = "[PAD]";
pub const CONTINUATION_PREFIX: &str = "##";
/// Words longer than this many characters become a single `[UNK]`.
pub const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("duplicate vocabulary token {0:?}")]
    DuplicateToken(String),
    #[error("vocabulary has no [UNK] token")]
    MissingUnk,
    #[error("vocabulary is not valid UTF-8")]
    InvalidUtf8,
}

#[derive(Debug, Error)]
pub enum HistogramError {
    #[error("bin width must be at least 1")]
    InvalidBinWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialTokens {
    pub unk: u32,
    pub cls: Option<u32>,
    pub sep: Option<u32>,
    pub pad: Option<u32>,
}

/// Immutable token table; ids are line numbers of the vocabulary file.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    specials: SpecialTokens,
}

/// The 30,522-entry uncased WordPiece vocabulary, one token per line.
pub const BUNDLED_UNCASED_VOCAB: &[u8] = include_bytes!("../data/vocab-uncased.txt");

impl Vocabulary {
    pub fn bundled_uncased() -> Self {
        Self::load(BUNDLED_UNCASED_VOCAB).expect("bundled vocabulary is well formed")
    }

    pub fn load(raw: &[u8]) -> Result<Self, VocabError> {
        let text = std::str::from_utf8(raw).map_err(|_| VocabError::InvalidUtf8)?;
        Self::from_tokens(text.lines().map(str::to_string))
    }

    pub fn from_tokens<I>(tokens: I) -> Result<Self, VocabError>
    where
        I: IntoIterator,
        I::Item: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if ids.insert(tok.clone(), i as u32).is_some() {
                return Err(VocabError::DuplicateToken(tok.clone()));
            }
        }
        let unk = *ids.get(UNK_TOKEN).ok_or(VocabError::MissingUnk)?;
        let specials = SpecialTokens {
            unk,
            cls: ids.get(CLS_TOKEN).copied(),
            sep: ids.get(SEP_TOKEN).copied(),
            pad: ids.get(PAD_TOKEN).copied(),
        };
        Ok(Self {
            tokens,
            ids,
            specials,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn specials(&self) -> SpecialTokens {
        self.specials
    }
}

/// WordPiece tokenizer over a loaded [`Vocabulary`].
#[derive(Debug, Clone)]
pub struct WordPiece {
    vocab: Vocabulary,
    lowercase: bool,
    max_word_chars: usize,
}

impl WordPiece {
    pub fn new(vocab: Vocabulary) -> Self {
        Self {
            vocab,
            lowercase: true,
            max_word_chars: MAX_WORD_CHARS,
        }
    }

    /// Disabling lower-casing also disables accent stripping, matching the
    /// cased model family.
    pub fn with_lowercase(mut self, lowercase: bool) -> Self {
        self.lowercase = lowercase;
        self
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in basic_tokenize(text, self.lowercase) {
            self.push_word_pieces(&word, &mut out);
        }
        out
    }

    pub fn token_count(&self, text: &str, include_special: bool) -> usize {
        let n = self.tokenize(text).len();
        if include_special {
            n + 2
        } else {
            n
        }
    }

    fn push_word_pieces(&self, word: &str, out: &mut Vec<String>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > self.max_word_chars {
            out.push(UNK_TOKEN.to_string());
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut candidate: String = chars[start..end].iter().collect();
                if start > 0 {
                    candidate.insert_str(0, CONTINUATION_PREFIX);
                }
                if self.vocab.contains(&candidate) {
                    found = Some(candidate);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(piece) => {
                    pieces.push(piece);
                    start = end;
                }
                None => {
                    out.push(UNK_TOKEN.to_string());
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

fn category(c: char) -> &'static str {
    get_general_category(c).abbreviation()
}

fn is_whitespace(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\n' | '\r') || category(c) == "Zs"
}

fn is_control(c: char) -> bool {
    if matches!(c, '\t' | '\n' | '\r') {
        return false;
    }
    category(c).starts_with('C')
}

fn is_punctuation(c: char) -> bool {
    let cp = c as u32;
    if (33..=47).contains(&cp)
        || (58..=64).contains(&cp)
        || (91..=96).contains(&cp)
        || (123..=126).contains(&cp)
    {
        return true;
    }
    category(c).starts_with('P')
}

fn is_cjk(c: char) -> bool {
    let cp = c as u32;
    (0x4E00..=0x9FFF).contains(&cp)
        || (0x3400..=0x4DBF).contains(&cp)
        || (0x20000..=0x2A6DF).contains(&cp)
        || (0x2A700..=0x2B73F).contains(&cp)
        || (0x2B740..=0x2B81F).contains(&cp)
        || (0x2B820..=0x2CEAF).contains(&cp)
        || (0xF900..=0xFAFF).contains(&cp)
        || (0x2F800..=0x2FA1F).contains(&cp)
}

/// Pre-tokenization into words and single punctuation marks.
pub fn basic_tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len());
    for c in text.chars() {
        if c == '\0' || c == '\u{fffd}' || is_control(c) {
            continue;
        }
        if is_whitespace(c) {
            cleaned.push(' ');
        } else if is_cjk(c) {
            cleaned.push(' ');
            cleaned.push(c);
            cleaned.push(' ');
        } else {
            cleaned.push(c);
        }
    }

    let mut words = Vec::new();
    for raw in cleaned.split_whitespace() {
        let word: String = if lowercase {
            raw.to_lowercase()
                .nfd()
                .filter(|&c| category(c) != "Mn")
                .collect()
        } else {
            raw.to_string()
        };
        let mut current = String::new();
        for c in word.chars() {
            if is_punctuation(c) {
                if !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
                words.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    words
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub bin_width: usize,
    pub bin_edges: Vec<usize>,
    pub bin_counts: Vec<usize>,
    pub n: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub mean_tokens: f64,
}

impl HistogramReport {
    /// Bins are `[k*w, (k+1)*w)` for `k = 0..=max/w`. `bin_edges` holds the
    /// `len + 1` boundaries.
    pub fn from_counts(counts: &[usize], bin_width: usize) -> Result<Self, HistogramError> {
        if bin_width == 0 {
            return Err(HistogramError::InvalidBinWidth);
        }
        if counts.is_empty() {
            return Ok(Self {
                bin_width,
                bin_edges: vec![0],
                bin_counts: vec![],
                n: 0,
                min_tokens: 0,
                max_tokens: 0,
                mean_tokens: 0.0,
            });
        }
        let min = *counts.iter().min().unwrap();
        let max = *counts.iter().max().unwrap();
        let n_bins = max / bin_width + 1;
        let mut bin_counts = vec![0; n_bins];
        for &c in counts {
            bin_counts[c / bin_width] += 1;
        }
        let total: usize = counts.iter().sum();
        Ok(Self {
            bin_width,
            bin_edges: (0..=n_bins).map(|k| k * bin_width).collect(),
            bin_counts,
            n: counts.len(),
            min_tokens: min,
            max_tokens: max,
            mean_tokens: total as f64 / counts.len() as f64,
        })
    }

    /// CSV with header `bin_start,bin_end,count`, one row per bin, and a
    /// trailing `#` summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,count\n");
        for (k, count) in self.bin_counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.bin_edges[k], self.bin_edges[k + 1], count);
        }
        let _ = writeln!(
            out,
            "# n={} min={} max={} mean={:.4}",
            self.n, self.min_tokens, self.max_tokens, self.mean_tokens
        );
        out
    }
}

/// Token-length histogram of a dataset, counted without special tokens.
pub fn length_histogram(
    records: &[LabeledSentence],
    tokenizer: &WordPiece,
    bin_width: usize,
) -> Result<HistogramReport, HistogramError> {
    let counts: Vec<usize> = records
        .iter()
        .map(|r| tokenizer.token_count(&r.text, false))
        .collect();
    HistogramReport::from_counts(&counts, bin_width)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_vocab(extra: &[&str]) -> WordPiece {
        let mut toks = vec!["[PAD]", "[UNK]", "[CLS]", "[SEP]"];
        toks.extend_from_slice(extra);
        WordPiece::new(Vocabulary::from_tokens(toks).unwrap())
    }

    #[test]
    fn load_assigns_line_ids() {
        let v = Vocabulary::load(b"[PAD]\n[UNK]\n[CLS]\n[SEP]\nprofit\n").unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("[PAD]"), Some(0));
        assert_eq!(v.id("profit"), Some(4));
        assert_eq!(
            v.specials(),
            SpecialTokens { unk: 1, cls: Some(2), sep: Some(3), pad: Some(0) }
        );
    }

    #[test]
    fn load_rejects_duplicates_and_missing_unk() {
        assert!(matches!(
            Vocabulary::load(b"[UNK]\nprofit\nprofit\n"),
            Err(VocabError::DuplicateToken(t)) if t == "profit"
        ));
        assert!(matches!(Vocabulary::load(b"[PAD]\nprofit\n"), Err(VocabError::MissingUnk)));
    }

    #[test]
    fn whole_word_matches() {
        let wp = small_vocab(&["profit", "rose", "."]);
        assert_eq!(wp.tokenize("Profit rose."), ["profit", "rose", "."]);
    }

    #[test]
    fn greedy_longest_match() {
        let wp = small_vocab(&["un", "##aff", "##able", "##a", "##ff"]);
        assert_eq!(wp.tokenize("unaffable"), ["un", "##aff", "##able"]);
    }

    #[test]
    fn unmatched_word_is_unk() {
        let wp = small_vocab(&["un", "##aff"]);
        assert_eq!(wp.tokenize("unaffable profit"), ["[UNK]", "[UNK]"]);
    }

    #[test]
    fn overlong_word_is_unk() {
        let mut extra: Vec<String> = vec!["a".into(), "##a".into()];
        extra.push("a".repeat(101));
        let refs: Vec<&str> = extra.iter().map(String::as_str).collect();
        let wp = small_vocab(&refs);
        assert_eq!(wp.tokenize(&"a".repeat(101)), ["[UNK]"]);
        assert_eq!(wp.tokenize(&"a".repeat(100)).len(), 100);
    }

    #[test]
    fn empty_text() {
        let wp = small_vocab(&[]);
        assert!(wp.tokenize("").is_empty());
        assert_eq!(wp.token_count("", false), 0);
        assert_eq!(wp.token_count("", true), 2);
    }

    #[test]
    fn basic_split_lowercases_and_strips_accents() {
        assert_eq!(
            basic_tokenize("Yhtiö's EUR5.2mn\u{00a0}(Café)", true),
            ["yhtio", "'", "s", "eur5", ".", "2mn", "(", "cafe", ")"]
        );
        assert_eq!(basic_tokenize("Café", false), ["Café"]);
        assert_eq!(basic_tokenize("a\u{0}b\u{200b}c", true), ["abc"]);
        assert_eq!(basic_tokenize("x中y", true), ["x", "中", "y"]);
    }

    #[test]
    fn histogram_bins() {
        let h = HistogramReport::from_counts(&[2, 2, 10], 5).unwrap();
        assert_eq!(h.bin_edges, [0, 5, 10, 15]);
        assert_eq!(h.bin_counts, [2, 0, 1]);
        assert_eq!((h.min_tokens, h.max_tokens), (2, 10));
        assert!((h.mean_tokens - 14.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            h.to_csv(),
            "bin_start,bin_end,count\n0,5,2\n5,10,0\n10,15,1\n# n=3 min=2 max=10 mean=4.6667\n"
        );
        assert!(matches!(
            HistogramReport::from_counts(&[1], 0),
            Err(HistogramError::InvalidBinWidth)
        ));
    }
}
