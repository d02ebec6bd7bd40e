//! Next-sentence-prediction pair datasets built from plain-text news.
//!
//! Input is a blank-line-delimited corpus. Positives are adjacent sentence
//! pairs sampled without replacement; each negative keeps the A side of an
//! adjacent pair and takes its B side from a different adjacent pair.

use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{seeded_rng, SeededRng};

#[derive(Debug, Error, PartialEq)]
pub enum NspError {
    #[error("target count must be even and positive, got {0}")]
    InvalidTarget(usize),
    #[error("corpus has {available} adjacent pairs, need {needed}")]
    InsufficientCorpus { available: usize, needed: usize },
    #[error("invalid test size {test_size} for {total} pairs")]
    InvalidSize { test_size: usize, total: usize },
}

/// Tokens that end in a period without ending a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "inc.", "ltd.", "corp.", "co.",
    "plc.", "llc.", "bros.", "eur.", "usd.", "gbp.", "no.", "nos.", "vs.", "approx.",
    "est.", "dept.", "jan.", "feb.", "mar.", "apr.", "jun.", "jul.", "aug.", "sep.", "sept.",
    "oct.", "nov.", "dec.", "e.g.", "i.e.", "u.s.", "u.k.", "a.m.", "p.m.", "etc.", "oy.", "oyj.",
    "ab.", "ag.", "sa.", "nv.",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParagraphDoc {
    pub doc_id: usize,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NspLabel {
    NotNext = 0,
    IsNext = 1,
}

impl NspLabel {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// Where a pair came from. Positions index into `ParagraphDoc::sentences`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairOrigin {
    Adjacent {
        doc_id: usize,
        position: usize,
    },
    Sampled {
        doc_a: usize,
        position_a: usize,
        doc_b: usize,
        position_b: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub sentence_a: String,
    pub sentence_b: String,
    pub label: NspLabel,
    pub origin: PairOrigin,
}

#[derive(Serialize, Deserialize)]
struct PairLine<'a> {
    sentence_a: &'a str,
    sentence_b: &'a str,
    label: u8,
}

/// Writes `{"sentence_a", "sentence_b", "label"}` lines.
pub fn write_pairs<W: Write>(mut writer: W, pairs: &[SentencePair]) -> std::io::Result<()> {
    for p in pairs {
        let line = PairLine {
            sentence_a: &p.sentence_a,
            sentence_b: &p.sentence_b,
            label: p.label.as_u8(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

fn is_abbreviation(token: &str) -> bool {
    let t = token.trim_start_matches(['(', '"', '\'', '\u{201c}', '\u{2018}']);
    let lower = t.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
        || (t.len() == 2 && t.chars().next().is_some_and(|c| c.is_ascii_uppercase()))
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
}

/// Splits one paragraph into sentences. A boundary is `.`, `!` or `?`
/// (plus any closing quotes) followed by whitespace and an upper-case
/// letter, or by the end of the text. A `.` that ends a known abbreviation
/// or a single capital initial is not a boundary.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut end = i + 1;
            while end < chars.len() && (is_closing(chars[end]) || matches!(chars[end], '.' | '!' | '?')) {
                end += 1;
            }
            let mut j = end;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            let at_end = j == chars.len();
            let mut k = j;
            while k < chars.len() && is_opening(chars[k]) {
                k += 1;
            }
            let capital_follows = j > end && k < chars.len() && chars[k].is_uppercase();
            let boundary = if at_end {
                true
            } else if !capital_follows {
                false
            } else if c == '.' {
                let word_start = chars[start..i]
                    .iter()
                    .rposition(|ch| ch.is_whitespace())
                    .map(|p| start + p + 1)
                    .unwrap_or(start);
                let token: String = chars[word_start..=i].iter().collect();
                !is_abbreviation(&token)
            } else {
                true
            };
            if boundary {
                push_sentence(&chars[start..end], &mut out);
                start = j;
                i = j;
                continue;
            }
            i = end;
            continue;
        }
        i += 1;
    }
    if start < chars.len() {
        push_sentence(&chars[start..], &mut out);
    }
    out
}

fn push_sentence(chars: &[char], out: &mut Vec<String>) {
    let s: String = chars.iter().collect();
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if !s.is_empty() {
        out.push(s);
    }
}

/// Splits a blank-line-delimited corpus into documents of sentences.
/// Documents with no sentences are dropped; ids count kept documents.
pub fn segment_corpus(raw: &str) -> Vec<ParagraphDoc> {
    let mut docs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let flush = |current: &mut Vec<&str>, docs: &mut Vec<ParagraphDoc>| {
        if current.is_empty() {
            return;
        }
        let sentences = split_sentences(&current.join(" "));
        current.clear();
        if !sentences.is_empty() {
            docs.push(ParagraphDoc {
                doc_id: docs.len(),
                sentences,
            });
        }
    };
    for line in raw.lines() {
        if line.trim().is_empty() {
            flush(&mut current, &mut docs);
        } else {
            current.push(line.trim());
        }
    }
    flush(&mut current, &mut docs);
    docs
}

/// Every `(doc index, position)` with a successor in the same document.
fn adjacent_pairs(docs: &[ParagraphDoc]) -> Vec<(usize, usize)> {
    docs.iter()
        .enumerate()
        .flat_map(|(d, doc)| (0..doc.sentences.len().saturating_sub(1)).map(move |p| (d, p)))
        .collect()
}

const NEGATIVE_ATTEMPTS: usize = 64;

/// Builds exactly `target_count / 2` positives and as many negatives, then
/// shuffles the combined list. A negative takes the A side of a uniformly
/// drawn adjacent pair and the B side of a different one; draws whose B
/// text equals the A side or its true successor are redrawn.
pub fn generate_pairs(
    docs: &[ParagraphDoc],
    target_count: usize,
    seed: u64,
) -> Result<Vec<SentencePair>, NspError> {
    let mut rng = seeded_rng(seed);
    generate_with_rng(docs, target_count, &mut rng)
}

fn generate_with_rng(
    docs: &[ParagraphDoc],
    target_count: usize,
    rng: &mut SeededRng,
) -> Result<Vec<SentencePair>, NspError> {
    if target_count == 0 || !target_count.is_multiple_of(2) {
        return Err(NspError::InvalidTarget(target_count));
    }
    let half = target_count / 2;
    let candidates = adjacent_pairs(docs);
    if candidates.len() < half || candidates.len() < 2 {
        return Err(NspError::InsufficientCorpus {
            available: candidates.len(),
            needed: half.max(2),
        });
    }
    let sentence = |d: usize, p: usize| docs[d].sentences[p].as_str();

    let chosen = index::sample(rng, candidates.len(), half).into_vec();
    let mut pairs = Vec::with_capacity(target_count);
    for &c in &chosen {
        let (d, p) = candidates[c];
        pairs.push(SentencePair {
            sentence_a: sentence(d, p).to_string(),
            sentence_b: sentence(d, p + 1).to_string(),
            label: NspLabel::IsNext,
            origin: PairOrigin::Adjacent {
                doc_id: docs[d].doc_id,
                position: p,
            },
        });
    }
    for _ in 0..half {
        let mut picked = None;
        for _ in 0..NEGATIVE_ATTEMPTS {
            let c = rng.random_range(0..candidates.len());
            let mut k = rng.random_range(0..candidates.len() - 1);
            if k >= c {
                k += 1;
            }
            let (d, p) = candidates[c];
            let (db, pb) = candidates[k];
            let a = sentence(d, p);
            let b = sentence(db, pb + 1);
            if b != sentence(d, p + 1) && b != a {
                picked = Some(((d, p), (db, pb + 1)));
                break;
            }
        }
        let ((d, p), (db, pb)) = picked.ok_or(NspError::InsufficientCorpus {
            available: candidates.len(),
            needed: half.max(2),
        })?;
        pairs.push(SentencePair {
            sentence_a: sentence(d, p).to_string(),
            sentence_b: sentence(db, pb).to_string(),
            label: NspLabel::NotNext,
            origin: PairOrigin::Sampled {
                doc_a: docs[d].doc_id,
                position_a: p,
                doc_b: docs[db].doc_id,
                position_b: pb,
            },
        });
    }
    pairs.shuffle(rng);
    Ok(pairs)
}

/// Generates each shard independently with seed `seed + i` and
/// concatenates the results in shard order.
pub fn generate_pairs_sharded(
    shards: &[Vec<ParagraphDoc>],
    target_per_shard: usize,
    seed: u64,
) -> Result<Vec<SentencePair>, NspError> {
    let mut out = Vec::new();
    for (i, shard) in shards.iter().enumerate() {
        out.extend(generate_pairs(shard, target_per_shard, seed.wrapping_add(i as u64))?);
    }
    Ok(out)
}

/// Shuffles by seed, then fills the test set with `ceil(test_size / 2)`
/// positives and `floor(test_size / 2)` negatives taken in shuffled order.
/// The train set is everything else, in shuffled order.
pub fn hold_out_pairs(
    pairs: &[SentencePair],
    test_size: usize,
    seed: u64,
) -> Result<(Vec<SentencePair>, Vec<SentencePair>), NspError> {
    let invalid = NspError::InvalidSize {
        test_size,
        total: pairs.len(),
    };
    if test_size > 0 && test_size >= pairs.len() {
        return Err(invalid);
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut seeded_rng(seed));
    let mut quota_pos = test_size.div_ceil(2);
    let mut quota_neg = test_size / 2;
    let mut train = Vec::with_capacity(pairs.len() - test_size);
    let mut test = Vec::with_capacity(test_size);
    for i in order {
        let pair = &pairs[i];
        let quota = match pair.label {
            NspLabel::IsNext => &mut quota_pos,
            NspLabel::NotNext => &mut quota_neg,
        };
        if *quota > 0 {
            *quota -= 1;
            test.push(pair.clone());
        } else {
            train.push(pair.clone());
        }
    }
    if quota_pos > 0 || quota_neg > 0 {
        return Err(invalid);
    }
    Ok((train, test))
}
