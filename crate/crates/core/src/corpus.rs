//! Labeled sentence datasets: the phrasebank line format, label statistics,
//! stratified splitting, synthetic sample ingestion and corpus merging.
//!
//! The interchange format shared with every other stage is line-delimited
//! JSON, one [`LabeledSentence`] per line.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeded_rng;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed line {0}")]
    MalformedLine(usize),
    #[error("input is not valid {encoding}: {detail}")]
    EncodingError { encoding: String, detail: String },
    #[error("unknown text encoding {0:?}")]
    UnknownEncoding(String),
    #[error("invalid split ratios {0:?}: must be positive and sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("malformed record {0}")]
    MalformedRecord(usize),
    #[error("invalid agreement level {0}")]
    InvalidAgreement(u8),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Three-way sentiment class. The ordinal encoding is fixed:
/// negative=0, neutral=1, positive=2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Negative = 0,
    Neutral = 1,
    Positive = 2,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [Self::Negative, Self::Neutral, Self::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Negative => "negative",
            Self::Neutral => "neutral",
            Self::Positive => "positive",
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = CorpusError;

    /// Case-insensitive; surrounding whitespace is ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "negative" => Ok(Self::Negative),
            "neutral" => Ok(Self::Neutral),
            "positive" => Ok(Self::Positive),
            _ => Err(CorpusError::UnknownLabel(s.to_string())),
        }
    }
}

/// Annotator agreement threshold of a phrasebank subset, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct AgreementLevel(u8);

impl AgreementLevel {
    pub const ALL: [AgreementLevel; 4] = [Self(50), Self(66), Self(75), Self(100)];

    pub fn percent(self) -> u8 {
        self.0
    }

    /// File name of the matching subset in the public distribution.
    pub fn phrasebank_file_name(self) -> &'static str {
        match self.0 {
            50 => "Sentences_50Agree.txt",
            66 => "Sentences_66Agree.txt",
            75 => "Sentences_75Agree.txt",
            _ => "Sentences_AllAgree.txt",
        }
    }
}

impl TryFrom<u8> for AgreementLevel {
    type Error = CorpusError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            50 | 66 | 75 | 100 => Ok(Self(value)),
            other => Err(CorpusError::InvalidAgreement(other)),
        }
    }
}

impl From<AgreementLevel> for u8 {
    fn from(level: AgreementLevel) -> u8 {
        level.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Phrasebank,
    ConcatRandom,
    ConcatSequential,
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Phrasebank => "phrasebank",
            Self::ConcatRandom => "concat_random",
            Self::ConcatSequential => "concat_sequential",
            Self::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub id: String,
    pub text: String,
    pub label: SentimentLabel,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tokens: Option<usize>,
}

/// Text decoding applied to raw phrasebank bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TextEncoding {
    /// ISO-8859-1; every byte maps to the code point of the same value.
    #[default]
    Latin1,
    Utf8,
    /// UTF-8 when the bytes are valid UTF-8, otherwise ISO-8859-1.
    Auto,
}

impl TextEncoding {
    pub fn name(self) -> &'static str {
        match self {
            Self::Latin1 => "iso-8859-1",
            Self::Utf8 => "utf-8",
            Self::Auto => "auto",
        }
    }

    pub fn decode(self, raw: &[u8]) -> Result<String, CorpusError> {
        match self {
            Self::Latin1 => Ok(raw.iter().map(|&b| b as char).collect()),
            Self::Utf8 => String::from_utf8(raw.to_vec()).map_err(|e| CorpusError::EncodingError {
                encoding: self.name().to_string(),
                detail: e.to_string(),
            }),
            Self::Auto => match std::str::from_utf8(raw) {
                Ok(s) => Ok(s.to_string()),
                Err(_) => Self::Latin1.decode(raw),
            },
        }
    }
}

impl FromStr for TextEncoding {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iso-8859-1" | "iso8859-1" | "latin1" | "latin-1" => Ok(Self::Latin1),
            "utf-8" | "utf8" => Ok(Self::Utf8),
            "auto" => Ok(Self::Auto),
            _ => Err(CorpusError::UnknownEncoding(s.to_string())),
        }
    }
}

/// Parses `<sentence>@<label>` lines. The sentence is everything before the
/// last `@`; blank lines are skipped and line numbers in errors are 1-based.
pub fn parse_phrasebank(
    raw: &[u8],
    encoding: TextEncoding,
) -> Result<Vec<LabeledSentence>, CorpusError> {
    let decoded = encoding.decode(raw)?;
    let decoded = decoded.strip_prefix('\u{feff}').unwrap_or(&decoded);
    let mut records = Vec::new();
    for (idx, line) in decoded.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (text, label) = line
            .rsplit_once('@')
            .ok_or(CorpusError::MalformedLine(line_no))?;
        let label: SentimentLabel = label
            .parse()
            .map_err(|_| CorpusError::MalformedLine(line_no))?;
        let text = text.trim();
        if text.is_empty() {
            return Err(CorpusError::MalformedLine(line_no));
        }
        records.push(LabeledSentence {
            id: format!("pb-{line_no}"),
            text: text.to_string(),
            label,
            source: Source::Phrasebank,
            n_tokens: None,
        });
    }
    Ok(records)
}

/// Inverse of [`parse_phrasebank`] for UTF-8 output.
pub fn serialize_phrasebank(records: &[LabeledSentence]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.text);
        out.push('@');
        out.push_str(r.label.as_str());
        out.push('\n');
    }
    out
}

/// Label distribution of a dataset. Percentages are kept unrounded; use
/// [`CorpusStats::rounded`] for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub pct_negative: f64,
    pub pct_neutral: f64,
    pub pct_positive: f64,
}

impl CorpusStats {
    pub fn rounded(&self) -> CorpusStats {
        let r = |x: f64| (x * 10.0).round() / 10.0;
        CorpusStats {
            count: self.count,
            pct_negative: r(self.pct_negative),
            pct_neutral: r(self.pct_neutral),
            pct_positive: r(self.pct_positive),
        }
    }

    pub fn percentages(&self) -> [f64; 3] {
        [self.pct_negative, self.pct_neutral, self.pct_positive]
    }
}

pub fn label_distribution(records: &[LabeledSentence]) -> CorpusStats {
    let mut counts = [0usize; 3];
    for r in records {
        counts[r.label.index()] += 1;
    }
    let total = records.len();
    let pct = |c: usize| {
        if total == 0 {
            0.0
        } else {
            100.0 * c as f64 / total as f64
        }
    };
    CorpusStats {
        count: total,
        pct_negative: pct(counts[0]),
        pct_neutral: pct(counts[1]),
        pct_positive: pct(counts[2]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self, CorpusError> {
        let ratios = Self {
            train,
            validation,
            test,
        };
        ratios.validate()?;
        Ok(ratios)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let all = [self.train, self.validation, self.test];
        let ok = all.iter().all(|r| r.is_finite() && *r > 0.0)
            && ((all.iter().sum::<f64>()) - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(CorpusError::InvalidRatios(all))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledSentence>,
    pub validation: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
}

/// Stratified three-way split. Each label class is shuffled independently
/// and cut by the ratios: `floor(train * n)` records go to train and the
/// remainder is divided between validation and test in proportion to their
/// ratios. Every split keeps the input order of its records.
pub fn split_dataset(
    records: &[LabeledSentence],
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    ratios.validate()?;
    let mut rng = seeded_rng(seed);
    // 0 = train, 1 = validation, 2 = test
    let mut assignment = vec![0u8; records.len()];
    for label in SentimentLabel::ALL {
        let mut members: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = ((ratios.train * n as f64) + 1e-9).floor() as usize;
        let n_train = n_train.min(n);
        let rest = n - n_train;
        let val_share = ratios.validation / (ratios.validation + ratios.test);
        let n_val = ((rest as f64 * val_share) + 0.5).floor() as usize;
        let n_val = n_val.min(rest);
        for (pos, &idx) in members.iter().enumerate() {
            assignment[idx] = if pos < n_train {
                0
            } else if pos < n_train + n_val {
                1
            } else {
                2
            };
        }
    }
    let mut split = DatasetSplit::default();
    for (record, which) in records.iter().zip(assignment) {
        match which {
            0 => split.train.push(record.clone()),
            1 => split.validation.push(record.clone()),
            _ => split.test.push(record.clone()),
        }
    }
    Ok(split)
}

#[derive(Deserialize)]
struct RawSynthetic {
    text: Option<String>,
    label: Option<String>,
}

/// Collapses runs of whitespace to a single space and trims.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Ingests line-delimited JSON records carrying `text` and `label`.
///
/// Texts are whitespace-normalized and exact duplicates (after
/// normalization) are dropped, keeping the first occurrence. Errors carry
/// the 1-based line number of the offending record.
pub fn ingest_synthetic(raw: &str) -> Result<Vec<LabeledSentence>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawSynthetic =
            serde_json::from_str(line).map_err(|_| CorpusError::MalformedRecord(line_no))?;
        let (Some(text), Some(label)) = (rec.text, rec.label) else {
            return Err(CorpusError::MalformedRecord(line_no));
        };
        let label: SentimentLabel = label
            .parse()
            .map_err(|_| CorpusError::MalformedRecord(line_no))?;
        let text = normalize_whitespace(&text);
        if text.is_empty() {
            return Err(CorpusError::MalformedRecord(line_no));
        }
        if !seen.insert(text.clone()) {
            continue;
        }
        out.push(LabeledSentence {
            id: format!("syn-{}", out.len() + 1),
            text,
            label,
            source: Source::Synthetic,
            n_tokens: None,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergedCorpus {
    pub records: Vec<LabeledSentence>,
    pub source_counts: BTreeMap<Source, usize>,
}

/// Concatenates datasets in part order and re-assigns ids as `m-<n>`.
pub fn merge_corpora(parts: &[Vec<LabeledSentence>]) -> MergedCorpus {
    let mut merged = MergedCorpus::default();
    for record in parts.iter().flatten() {
        let mut record = record.clone();
        record.id = format!("m-{}", merged.records.len() + 1);
        *merged.source_counts.entry(record.source).or_default() += 1;
        merged.records.push(record);
    }
    merged
}

/// Checks the dataset-level invariants: trimmed text non-empty, ids unique.
pub fn validate_dataset(records: &[LabeledSentence]) -> Result<(), CorpusError> {
    let mut ids = HashSet::new();
    for (i, r) in records.iter().enumerate() {
        if r.text.trim().is_empty() {
            return Err(CorpusError::MalformedRecord(i + 1));
        }
        if !ids.insert(r.id.as_str()) {
            return Err(CorpusError::DuplicateId(r.id.clone()));
        }
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<LabeledSentence>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabeledSentence =
            serde_json::from_str(&line).map_err(|_| CorpusError::MalformedRecord(idx + 1))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_dataset<W: Write>(mut writer: W, records: &[LabeledSentence]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, text: &str, label: SentimentLabel) -> LabeledSentence {
        LabeledSentence {
            id: id.into(),
            text: text.into(),
            label,
            source: Source::Phrasebank,
            n_tokens: None,
        }
    }

    #[test]
    fn parses_single_line() {
        let out = parse_phrasebank(b"Profit rose to EUR 5 mn .@positive", TextEncoding::Latin1)
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].text, "Profit rose to EUR 5 mn .");
        assert_eq!(out[0].label, SentimentLabel::Positive);
        assert_eq!(out[0].source, Source::Phrasebank);
    }

    #[test]
    fn missing_separator_is_malformed() {
        let err = parse_phrasebank(b"no separator line", TextEncoding::Latin1).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine(1)));
    }

    #[test]
    fn unknown_label_reports_line_number() {
        let raw = b"a .@neutral\n\nb .@bullish\n";
        let err = parse_phrasebank(raw, TextEncoding::Utf8).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine(3)));
    }

    #[test]
    fn splits_on_last_at_sign() {
        let out = parse_phrasebank(b"mail ir@acme.com today@Neutral\r\n", TextEncoding::Utf8)
            .unwrap();
        assert_eq!(out[0].text, "mail ir@acme.com today");
        assert_eq!(out[0].label, SentimentLabel::Neutral);
    }

    #[test]
    fn latin1_bytes_decode_and_utf8_rejects_them() {
        let raw = b"Yhti\xf6 kasvoi .@positive";
        let out = parse_phrasebank(raw, TextEncoding::Latin1).unwrap();
        assert_eq!(out[0].text, "Yhtiö kasvoi .");
        assert!(matches!(
            parse_phrasebank(raw, TextEncoding::Utf8),
            Err(CorpusError::EncodingError { .. })
        ));
        let auto = parse_phrasebank(raw, TextEncoding::Auto).unwrap();
        assert_eq!(auto[0].text, "Yhtiö kasvoi .");
    }

    #[test]
    fn single_class_distribution() {
        let stats = label_distribution(&[rec("1", "x", SentimentLabel::Negative)]);
        assert_eq!(stats.count, 1);
        assert_eq!(stats.percentages(), [100.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_distribution_is_all_zero() {
        let stats = label_distribution(&[]);
        assert_eq!(stats.count, 0);
        assert_eq!(stats.percentages(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn agreement_levels_are_restricted() {
        assert!(AgreementLevel::try_from(66).is_ok());
        assert!(matches!(
            AgreementLevel::try_from(80),
            Err(CorpusError::InvalidAgreement(80))
        ));
    }

    fn class_pool(neg: usize, neu: usize, pos: usize) -> Vec<LabeledSentence> {
        let mut out = Vec::new();
        for (label, n) in [
            (SentimentLabel::Negative, neg),
            (SentimentLabel::Neutral, neu),
            (SentimentLabel::Positive, pos),
        ] {
            for i in 0..n {
                let id = format!("{label}-{i}");
                out.push(rec(&id, &format!("sentence {id}"), label));
            }
        }
        out
    }

    #[test]
    fn split_sizes_are_proportional_per_class() {
        let records = class_pool(50, 30, 20);
        let split = split_dataset(&records, SplitRatios::default(), 7).unwrap();
        assert_eq!(split.train.len(), 80);
        assert_eq!(split.validation.len(), 10);
        assert_eq!(split.test.len(), 10);
        for (label, n) in [
            (SentimentLabel::Negative, 50.0),
            (SentimentLabel::Neutral, 30.0),
            (SentimentLabel::Positive, 20.0),
        ] {
            let count = |v: &[LabeledSentence]| v.iter().filter(|r| r.label == label).count();
            assert!((count(&split.train) as f64 - 0.8 * n).abs() <= 1.0);
            assert!((count(&split.validation) as f64 - 0.1 * n).abs() <= 1.0);
            assert!((count(&split.test) as f64 - 0.1 * n).abs() <= 1.0);
        }
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let records = class_pool(50, 30, 20);
        let a = split_dataset(&records, SplitRatios::default(), 7).unwrap();
        let b = split_dataset(&records, SplitRatios::default(), 7).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&records, SplitRatios::default(), 8).unwrap();
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn bad_ratios_rejected() {
        let records = class_pool(5, 5, 5);
        for r in [
            SplitRatios { train: 0.8, validation: 0.1, test: 0.2 },
            SplitRatios { train: 0.9, validation: 0.1, test: 0.0 },
            SplitRatios { train: 1.2, validation: -0.1, test: -0.1 },
        ] {
            assert!(matches!(
                split_dataset(&records, r, 1),
                Err(CorpusError::InvalidRatios(_))
            ));
        }
    }

    #[test]
    fn synthetic_dedup_and_case_insensitive_labels() {
        let raw = concat!(
            r#"{"text": "Sales  grew\tstrongly ", "label": "Positive"}"#,
            "\n",
            r#"{"text": "Sales grew strongly", "label": "positive"}"#,
            "\n",
            r#"{"text": "Costs were flat", "label": "NEUTRAL"}"#,
            "\n",
        );
        let out = ingest_synthetic(raw).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].text, "Sales grew strongly");
        assert_eq!(out[0].label, SentimentLabel::Positive);
        assert_eq!(out[1].label, SentimentLabel::Neutral);
        assert!(out.iter().all(|r| r.source == Source::Synthetic));
    }

    #[test]
    fn synthetic_identity_on_unique_input() {
        let raw: String = (0..1000)
            .map(|i| format!("{{\"text\":\"headline number {i}\",\"label\":\"neutral\"}}\n"))
            .collect();
        let out = ingest_synthetic(&raw).unwrap();
        assert_eq!(out.len(), 1000);
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.text, format!("headline number {i}"));
        }
    }

    #[test]
    fn synthetic_malformed_records() {
        let missing = "{\"text\":\"ok\",\"label\":\"neutral\"}\n{\"text\":\"no label\"}\n";
        assert!(matches!(
            ingest_synthetic(missing),
            Err(CorpusError::MalformedRecord(2))
        ));
        let unknown = "{\"text\":\"x\",\"label\":\"bullish\"}";
        assert!(matches!(
            ingest_synthetic(unknown),
            Err(CorpusError::MalformedRecord(1))
        ));
        assert!(matches!(
            ingest_synthetic("not json"),
            Err(CorpusError::MalformedRecord(1))
        ));
    }

    #[test]
    fn merge_preserves_order_and_counts_sources() {
        let a = rec("x", "a", SentimentLabel::Neutral);
        let b = rec("x", "b", SentimentLabel::Neutral);
        let mut c = rec("x", "c", SentimentLabel::Positive);
        c.source = Source::Synthetic;
        let merged = merge_corpora(&[vec![a, b], vec![c]]);
        let texts: Vec<_> = merged.records.iter().map(|r| r.text.as_str()).collect();
        assert_eq!(texts, ["a", "b", "c"]);
        validate_dataset(&merged.records).unwrap();
        assert_eq!(merged.source_counts[&Source::Phrasebank], 2);
        assert_eq!(merged.source_counts[&Source::Synthetic], 1);

        let empty = merge_corpora(&[vec![], vec![]]);
        assert!(empty.records.is_empty());
    }

    #[test]
    fn dataset_jsonl_shape() {
        let mut r = rec("pb-1", "Profit rose .", SentimentLabel::Positive);
        let mut buf = Vec::new();
        write_dataset(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "{\"id\":\"pb-1\",\"text\":\"Profit rose .\",\"label\":\"positive\",\"source\":\"phrasebank\"}\n"
        );
        r.n_tokens = Some(5);
        buf.clear();
        write_dataset(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("\"n_tokens\":5"));
        let back = read_dataset(&buf[..]).unwrap();
        assert_eq!(back, vec![r]);
    }
}
