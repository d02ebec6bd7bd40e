//! Classification metrics: confusion matrices, accuracy, per-class and
//! macro precision/recall/F1, cross-entropy loss, test-size sweeps and
//! misclassification listings.
//!
//! A 0/0 precision or recall is defined as 0 and reported in
//! [`ClassMetrics::undefined`].

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeded_rng;

pub const PROB_CLAMP: f64 = 1e-12;
const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("invalid probability vector at record {0}")]
    InvalidProbability(usize),
    #[error("invalid sweep sizes: {0}")]
    InvalidSizes(String),
    #[error("confusion matrix must be square with at least one class")]
    NotSquare,
}

/// Rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    class_names: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(class_names: &[&str]) -> Self {
        let k = class_names.len();
        Self {
            class_names: class_names.iter().map(|s| s.to_string()).collect(),
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(class_names: &[&str], counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let k = class_names.len();
        if k == 0 || counts.len() != k || counts.iter().any(|row| row.len() != k) {
            return Err(EvalError::NotSquare);
        }
        Ok(Self {
            class_names: class_names.iter().map(|s| s.to_string()).collect(),
            counts,
        })
    }

    /// Builds a matrix from aligned class indices.
    pub fn from_indices(
        class_names: &[&str],
        actual: &[usize],
        predicted: &[usize],
    ) -> Result<Self, EvalError> {
        if actual.len() != predicted.len() {
            return Err(EvalError::LengthMismatch(actual.len(), predicted.len()));
        }
        let mut cm = Self::zeros(class_names);
        let k = class_names.len();
        for (&a, &p) in actual.iter().zip(predicted) {
            if a >= k {
                return Err(EvalError::UnknownLabel(a.to_string()));
            }
            if p >= k {
                return Err(EvalError::UnknownLabel(p.to_string()));
            }
            cm.counts[a][p] += 1;
        }
        Ok(cm)
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }

    /// Plain-text rendering with an "Actual \ Predicted" header.
    pub fn to_table(&self) -> String {
        let width = self
            .class_names
            .iter()
            .map(|s| s.len())
            .chain(self.counts.iter().flatten().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1)
            .max(6);
        let mut out = String::new();
        let _ = write!(out, "{:>w$}", "actual\\pred", w = width + 4);
        for name in &self.class_names {
            let _ = write!(out, " {name:>width$}");
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            let _ = write!(out, "{:>w$}", name, w = width + 4);
            for c in row {
                let _ = write!(out, " {c:>width$}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual");
        for name in &self.class_names {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            out.push_str(name);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

fn class_index(class_names: &[&str], label: &str) -> Result<usize, EvalError> {
    class_names
        .iter()
        .position(|c| *c == label)
        .ok_or_else(|| EvalError::UnknownLabel(label.to_string()))
}

/// Confusion matrix from label names; `counts[i][j]` counts records with
/// actual class `i` predicted as `j`.
pub fn confusion_matrix<A, P>(
    actual: &[A],
    predicted: &[P],
    class_names: &[&str],
) -> Result<ConfusionMatrix, EvalError>
where
    A: AsRef<str>,
    P: AsRef<str>,
{
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch(actual.len(), predicted.len()));
    }
    let mut cm = ConfusionMatrix::zeros(class_names);
    for (a, p) in actual.iter().zip(predicted) {
        let i = class_index(class_names, a.as_ref())?;
        let j = class_index(class_names, p.as_ref())?;
        cm.counts[i][j] += 1;
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    Ok(cm.trace() as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// True when any of the three ratios hit 0/0 and was set to 0.
    pub undefined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn harmonic(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Result<Vec<ClassMetrics>, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    Ok((0..cm.num_classes())
        .map(|c| {
            let tp = cm.get(c, c);
            let (precision, p_undef) = ratio(tp, cm.col_sum(c));
            let (recall, r_undef) = ratio(tp, cm.row_sum(c));
            let (f1, f_undef) = harmonic(precision, recall);
            ClassMetrics {
                class: cm.class_names[c].clone(),
                precision,
                recall,
                f1,
                support: cm.row_sum(c),
                undefined: p_undef || r_undef || f_undef,
            }
        })
        .collect())
}

/// Unweighted mean of per-class F1.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    let per_class = per_class_metrics(cm)?;
    Ok(per_class.iter().map(|m| m.f1).sum::<f64>() / per_class.len() as f64)
}

/// Harmonic mean of macro precision and macro recall.
pub fn macro_f1_harmonic(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    let per_class = per_class_metrics(cm)?;
    let k = per_class.len() as f64;
    let p = per_class.iter().map(|m| m.precision).sum::<f64>() / k;
    let r = per_class.iter().map(|m| m.recall).sum::<f64>() / k;
    Ok(harmonic(p, r).0)
}

/// Mean of `-ln p(actual)` with probabilities clamped to at least 1e-12.
/// Each vector must be non-negative and sum to 1 within 1e-6.
pub fn cross_entropy_loss<V: AsRef<[f64]>>(probs: &[V], actual: &[usize]) -> Result<f64, EvalError> {
    if probs.len() != actual.len() {
        return Err(EvalError::LengthMismatch(probs.len(), actual.len()));
    }
    if probs.is_empty() {
        return Err(EvalError::EmptyMatrix);
    }
    let mut total = 0.0;
    for (i, (p, &a)) in probs.iter().zip(actual).enumerate() {
        let p = p.as_ref();
        let valid = a < p.len()
            && p.iter().all(|x| x.is_finite() && *x >= 0.0)
            && (p.iter().sum::<f64>() - 1.0).abs() <= PROB_SUM_TOLERANCE;
        if !valid {
            return Err(EvalError::InvalidProbability(i));
        }
        total -= p[a].max(PROB_CLAMP).ln();
    }
    Ok(total / probs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroF1Definition {
    MeanOfClassF1,
    HarmonicOfMacroPr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: u64,
    pub loss: Option<f64>,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Mean of per-class F1; the reported F1.
    pub macro_f1: f64,
    pub macro_f1_harmonic: f64,
    pub macro_f1_definition: MacroF1Definition,
}

impl MetricsReport {
    pub fn from_matrix(cm: &ConfusionMatrix, loss: Option<f64>) -> Result<Self, EvalError> {
        let per_class = per_class_metrics(cm)?;
        let k = per_class.len() as f64;
        Ok(Self {
            n: cm.total(),
            loss,
            accuracy: accuracy(cm)?,
            macro_precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
            macro_recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
            macro_f1: macro_f1(cm)?,
            macro_f1_harmonic: macro_f1_harmonic(cm)?,
            macro_f1_definition: MacroF1Definition::MeanOfClassF1,
            per_class,
        })
    }

    /// One-row table in the Loss / Accuracy / F1 Score layout.
    pub fn to_table(&self, model_name: &str) -> String {
        let loss = self.loss.map_or("-".to_string(), |l| format!("{l:.2}"));
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} {:>6} {:>9} {:>9}", "Model", "Loss", "Accuracy", "F1 Score");
        let _ = writeln!(
            out,
            "{:<20} {:>6} {:>9.2} {:>9.2}",
            model_name, loss, self.accuracy, self.macro_f1
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<12} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
        for m in &self.per_class {
            let flag = if m.undefined { " (0/0)" } else { "" };
            let _ = writeln!(
                out,
                "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>8}{flag}",
                m.class, m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(
            out,
            "macro f1 = mean of per-class f1 = {:.4} (harmonic mean of macro P/R = {:.4})",
            self.macro_f1, self.macro_f1_harmonic
        );
        out
    }

    pub fn csv_header() -> &'static str {
        "n,loss,accuracy,macro_precision,macro_recall,macro_f1,macro_f1_harmonic"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.n,
            self.loss.map_or(String::new(), |l| format!("{l:.6}")),
            self.accuracy,
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            self.macro_f1_harmonic
        )
    }
}

/// One evaluated record: class indices plus an optional probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub actual: usize,
    pub predicted: usize,
    pub probs: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelField {
    Index(usize),
    Name(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ProbsField {
    List(Vec<f64>),
    Map(std::collections::BTreeMap<String, f64>),
}

#[derive(Deserialize)]
struct PredictionLine {
    id: serde_json::Value,
    actual: LabelField,
    predicted: LabelField,
    #[serde(default)]
    probs: Option<ProbsField>,
}

fn resolve_label(field: LabelField, class_names: &[&str]) -> Result<usize, EvalError> {
    match field {
        LabelField::Index(i) if i < class_names.len() => Ok(i),
        LabelField::Index(i) => Err(EvalError::UnknownLabel(i.to_string())),
        LabelField::Name(s) => class_names
            .iter()
            .position(|c| c.eq_ignore_ascii_case(&s))
            .ok_or(EvalError::UnknownLabel(s)),
    }
}

/// Reads `{"id", "actual", "predicted", "probs"?}` lines. Labels may be
/// class names or indices; `probs` may be a list in class order or an
/// object keyed by class name. Blank lines are skipped.
pub fn read_predictions(raw: &str, class_names: &[&str]) -> Result<Vec<Prediction>, PredictionParseError> {
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let bad = |detail: String| PredictionParseError { line: line_no, detail };
        let rec: PredictionLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let id = match rec.id {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        let actual = resolve_label(rec.actual, class_names).map_err(|e| bad(e.to_string()))?;
        let predicted = resolve_label(rec.predicted, class_names).map_err(|e| bad(e.to_string()))?;
        let probs = match rec.probs {
            None => None,
            Some(ProbsField::List(v)) => Some(v),
            Some(ProbsField::Map(m)) => Some(
                class_names
                    .iter()
                    .map(|c| m.get(*c).copied().ok_or_else(|| bad(format!("probs missing {c:?}"))))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        if probs.as_ref().is_some_and(|p| p.len() != class_names.len()) {
            return Err(bad(format!("expected {} probabilities", class_names.len())));
        }
        out.push(Prediction { id, actual, predicted, probs });
    }
    Ok(out)
}

#[derive(Debug, Error, PartialEq)]
#[error("predictions line {line}: {detail}")]
pub struct PredictionParseError {
    pub line: usize,
    pub detail: String,
}

/// Metrics over a set of predictions; loss is reported only when every
/// prediction carries probabilities.
pub fn evaluate(predictions: &[Prediction], class_names: &[&str]) -> Result<MetricsReport, EvalError> {
    let actual: Vec<usize> = predictions.iter().map(|p| p.actual).collect();
    let predicted: Vec<usize> = predictions.iter().map(|p| p.predicted).collect();
    let cm = ConfusionMatrix::from_indices(class_names, &actual, &predicted)?;
    let loss = if predictions.iter().all(|p| p.probs.is_some()) && !predictions.is_empty() {
        let probs: Vec<&[f64]> = predictions.iter().map(|p| p.probs.as_deref().unwrap()).collect();
        Some(cross_entropy_loss(&probs, &actual)?)
    } else {
        None
    };
    MetricsReport::from_matrix(&cm, loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub size: usize,
    pub report: MetricsReport,
}

/// Metrics on growing prefixes of the seed-shuffled predictions.
pub fn evaluate_by_test_size(
    predictions: &[Prediction],
    class_names: &[&str],
    sizes: &[usize],
    seed: u64,
) -> Result<Vec<SweepPoint>, EvalError> {
    if sizes.is_empty() {
        return Err(EvalError::InvalidSizes("no sizes given".into()));
    }
    for w in sizes.windows(2) {
        if w[0] >= w[1] {
            return Err(EvalError::InvalidSizes(format!("{} then {}: not ascending", w[0], w[1])));
        }
    }
    if sizes[0] == 0 || *sizes.last().unwrap() > predictions.len() {
        return Err(EvalError::InvalidSizes(format!(
            "sizes must lie in 1..={}",
            predictions.len()
        )));
    }
    let mut stream: Vec<&Prediction> = predictions.iter().collect();
    stream.shuffle(&mut seeded_rng(seed));
    sizes
        .iter()
        .map(|&size| {
            let prefix: Vec<Prediction> = stream[..size].iter().map(|p| (*p).clone()).collect();
            Ok(SweepPoint {
                size,
                report: evaluate(&prefix, class_names)?,
            })
        })
        .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = format!("size,{}\n", MetricsReport::csv_header());
    for p in points {
        let _ = writeln!(out, "{},{}", p.size, p.report.csv_row());
    }
    out
}

/// Records whose `(actual, predicted)` equals `filter`, in input order.
pub fn list_misclassified<'a, T>(
    records: &'a [T],
    actual: &[usize],
    predicted: &[usize],
    filter: (usize, usize),
) -> Result<Vec<&'a T>, EvalError> {
    if records.len() != actual.len() {
        return Err(EvalError::LengthMismatch(records.len(), actual.len()));
    }
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch(actual.len(), predicted.len()));
    }
    Ok(records
        .iter()
        .zip(actual.iter().zip(predicted))
        .filter(|(_, (&a, &p))| (a, p) == filter)
        .map(|(r, _)| r)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SENT: [&str; 3] = ["negative", "neutral", "positive"];

    #[test]
    fn perfect_two_records() {
        let cm = confusion_matrix(&["negative", "positive"], &["negative", "positive"], &SENT).unwrap();
        assert_eq!((cm.get(0, 0), cm.get(1, 1), cm.get(2, 2)), (1, 0, 1));
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
    }

    #[test]
    fn empty_inputs_give_zero_matrix() {
        let cm = confusion_matrix::<&str, &str>(&[], &[], &SENT).unwrap();
        assert_eq!(cm.total(), 0);
        assert_eq!(accuracy(&cm), Err(EvalError::EmptyMatrix));
        assert_eq!(macro_f1(&cm), Err(EvalError::EmptyMatrix));
    }

    #[test]
    fn mismatch_and_unknown_label() {
        assert_eq!(
            confusion_matrix(&["neutral"], &["neutral", "neutral"], &SENT),
            Err(EvalError::LengthMismatch(1, 2))
        );
        assert_eq!(
            confusion_matrix(&["bullish"], &["neutral"], &SENT),
            Err(EvalError::UnknownLabel("bullish".into()))
        );
        assert!(ConfusionMatrix::from_indices(&SENT, &[3], &[0]).is_err());
    }

    #[test]
    fn diagonal_matrix_is_perfect() {
        let cm = ConfusionMatrix::from_counts(&SENT, vec![vec![4, 0, 0], vec![0, 7, 0], vec![0, 0, 2]]).unwrap();
        for m in per_class_metrics(&cm).unwrap() {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
            assert!(!m.undefined);
        }
        assert_eq!(macro_f1(&cm).unwrap(), 1.0);
    }

    #[test]
    fn absent_class_is_zero_by_convention() {
        let cm = ConfusionMatrix::from_counts(&SENT, vec![vec![3, 1, 0], vec![2, 5, 0], vec![0, 0, 0]]).unwrap();
        let m = &per_class_metrics(&cm).unwrap()[2];
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.undefined);
    }

    #[test]
    fn loss_cases() {
        assert_eq!(cross_entropy_loss(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], &[0, 2]).unwrap(), 0.0);
        let third = 1.0 / 3.0;
        let l = cross_entropy_loss(&[[third; 3]], &[1]).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        let l = cross_entropy_loss(&[[1.0, 0.0, 0.0]], &[1]).unwrap();
        assert!((l - 27.631021115928547).abs() < 1e-9);
        assert_eq!(
            cross_entropy_loss(&[[0.5, 0.6, 0.0]], &[1]),
            Err(EvalError::InvalidProbability(0))
        );
        assert_eq!(
            cross_entropy_loss(&[[1.0, 0.0, 0.0]], &[1, 2]),
            Err(EvalError::LengthMismatch(1, 2))
        );
    }

    fn preds(pairs: &[(usize, usize)]) -> Vec<Prediction> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(a, p))| Prediction {
                id: i.to_string(),
                actual: a,
                predicted: p,
                probs: None,
            })
            .collect()
    }

    #[test]
    fn sweep_sizes() {
        let p = preds(&[(0, 0), (1, 2), (2, 2), (1, 1), (0, 1)]);
        let points = evaluate_by_test_size(&p, &SENT, &[1, 3, 5], 4).unwrap();
        assert!([0.0, 1.0].contains(&points[0].report.accuracy));
        let full = evaluate(&p, &SENT).unwrap();
        assert_eq!(points[2].report.accuracy, full.accuracy);
        assert_eq!(points[2].report.macro_f1, full.macro_f1);
        assert!(evaluate_by_test_size(&p, &SENT, &[3, 2], 4).is_err());
        assert!(evaluate_by_test_size(&p, &SENT, &[6], 4).is_err());
        assert!(evaluate_by_test_size(&p, &SENT, &[0, 2], 4).is_err());
        let csv = sweep_csv(&points);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("size,n,loss,accuracy"));
    }

    #[test]
    fn misclassified_filter() {
        let texts = ["a", "b", "c", "d"];
        let actual = [1, 1, 2, 1];
        let predicted = [2, 1, 2, 2];
        let out = list_misclassified(&texts, &actual, &predicted, (1, 2)).unwrap();
        assert_eq!(out, [&"a", &"d"]);
        assert!(list_misclassified(&texts, &actual, &actual, (1, 2)).unwrap().is_empty());
    }

    #[test]
    fn prediction_lines() {
        let raw = r#"{"id":"a","actual":"neutral","predicted":2,"probs":[0.1,0.2,0.7]}

{"id":7,"actual":0,"predicted":"Negative","probs":{"negative":0.5,"neutral":0.5,"positive":0.0}}
{"id":"c","actual":"positive","predicted":"positive"}"#;
        let p = read_predictions(raw, &SENT).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!((p[0].actual, p[0].predicted), (1, 2));
        assert_eq!(p[1].id, "7");
        assert_eq!(p[1].probs.as_deref(), Some(&[0.5, 0.5, 0.0][..]));
        assert_eq!(p[2].probs, None);
        let err = read_predictions(r#"{"id":"x","actual":"bullish","predicted":0}"#, &SENT).unwrap_err();
        assert_eq!(err.line, 1);
        assert!(read_predictions(r#"{"id":"x","actual":0,"predicted":0,"probs":[1.0]}"#, &SENT).is_err());
    }

    #[test]
    fn report_table_labels_definition() {
        let cm = ConfusionMatrix::from_counts(&SENT, vec![vec![1, 0, 0], vec![0, 1, 1], vec![0, 0, 1]]).unwrap();
        let r = MetricsReport::from_matrix(&cm, Some(0.5)).unwrap();
        let t = r.to_table("finbert-lc");
        assert!(t.contains("mean of per-class f1"));
        assert!(t.contains("0.50"));
        assert!(cm.to_csv().starts_with("actual,negative,neutral,positive\nnegative,1,0,0\n"));
    }
}
