//! Long-sentence construction from same-label short sentences.
//!
//! Both builders share one proposal step: each label pool is shuffled by
//! seed and cut into consecutive runs whose lengths are drawn from the
//! configured range. Random concatenation keeps every run that fits the
//! token cap. Sequential concatenation additionally requires the run to
//! pass [`predict_multiple_nsp`] in prefix mode, so its output is always a
//! subset of the random build for the same seed.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use crate::corpus::{LabeledSentence, SentimentLabel, Source};
use crate::scoring::{bounded_map, NspScorer, ScoreError};
use crate::seeded_rng;
use crate::tokenization::WordPiece;

/// A pair passes the gate only when its score is strictly above this.
pub const NSP_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MAX_TOKENS: usize = 512;

#[derive(Debug, Error, PartialEq)]
pub enum ConcatError {
    #[error("need at least 2 sentences, got {0}")]
    TooFewSentences(usize),
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(#[from] ScoreError),
    #[error("invalid run length range {0}..={1}")]
    InvalidRunLength(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NspDecision {
    pub pair_index: usize,
    pub score: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    pub valid: bool,
    /// One entry per scorer call, in call order.
    pub decisions: Vec<NspDecision>,
}

impl GateOutcome {
    pub fn first_failure(&self) -> Option<usize> {
        self.decisions.iter().find(|d| !d.passed).map(|d| d.pair_index)
    }
}

/// Scores successive pairs and stops at the first score `<= 0.5`.
///
/// Pair `i` (for `i` in `0..len-1`) is `(sentences[i], sentences[i+1])`, or
/// with `concatenate` set, the space-join of `sentences[..=i]` against
/// `sentences[i+1]`.
pub fn predict_multiple_nsp<S, P>(
    sentences: &[S],
    concatenate: bool,
    scorer: &P,
) -> Result<GateOutcome, ConcatError>
where
    S: AsRef<str>,
    P: NspScorer + ?Sized,
{
    if sentences.len() < 2 {
        return Err(ConcatError::TooFewSentences(sentences.len()));
    }
    let mut decisions = Vec::with_capacity(sentences.len() - 1);
    let mut prefix = String::new();
    for i in 0..sentences.len() - 1 {
        let next = sentences[i + 1].as_ref();
        let score = if concatenate {
            if i > 0 {
                prefix.push(' ');
            }
            prefix.push_str(sentences[i].as_ref());
            scorer.predict_nsp(&prefix, next)?
        } else {
            scorer.predict_nsp(sentences[i].as_ref(), next)?
        };
        let passed = score > NSP_THRESHOLD;
        decisions.push(NspDecision {
            pair_index: i,
            score,
            passed,
        });
        if !passed {
            return Ok(GateOutcome {
                valid: false,
                decisions,
            });
        }
    }
    Ok(GateOutcome {
        valid: true,
        decisions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConcatMethod {
    Random,
    Sequential,
}

impl ConcatMethod {
    pub fn source(self) -> Source {
        match self {
            ConcatMethod::Random => Source::ConcatRandom,
            ConcatMethod::Sequential => Source::ConcatSequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcatSample {
    pub text: String,
    pub label: SentimentLabel,
    pub part_ids: Vec<String>,
    /// Token count including `[CLS]` and `[SEP]`.
    pub n_tokens: usize,
    pub method: ConcatMethod,
}

impl ConcatSample {
    /// Interchange record; ids are `<method>-<n>` with `n` 1-based.
    pub fn to_record(&self, index: usize) -> LabeledSentence {
        let prefix = match self.method {
            ConcatMethod::Random => "cr",
            ConcatMethod::Sequential => "cs",
        };
        LabeledSentence {
            id: format!("{prefix}-{}", index + 1),
            text: self.text.clone(),
            label: self.label,
            source: self.method.source(),
            n_tokens: Some(self.n_tokens),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    TokenCap { n_tokens: usize },
    NspGate { first_failing_pair: usize, score: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRun {
    pub run_index: usize,
    pub label: SentimentLabel,
    pub part_ids: Vec<String>,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcatConfig {
    pub max_tokens: usize,
    pub run_length: RangeInclusive<usize>,
    pub seed: u64,
    /// Upper bound on concurrently gated runs.
    pub jobs: usize,
}

impl Default for ConcatConfig {
    fn default() -> Self {
        Self {
            max_tokens: DEFAULT_MAX_TOKENS,
            run_length: 2..=6,
            seed: 42,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRun {
    pub run_index: usize,
    pub label: SentimentLabel,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConcatBuild {
    pub samples: Vec<ConcatSample>,
    pub rejected: Vec<RejectedRun>,
}

impl ConcatBuild {
    pub fn records(&self) -> Vec<LabeledSentence> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| s.to_record(i))
            .collect()
    }

    /// Audit log of rejected runs as CSV.
    pub fn rejected_csv(&self) -> String {
        let mut out = String::from("run_index,label,part_ids,reason,n_tokens,first_failing_pair,score\n");
        for r in &self.rejected {
            let ids = r.part_ids.join(" ");
            match &r.reason {
                RejectReason::TokenCap { n_tokens } => {
                    let _ = writeln!(out, "{},{},{},token_cap,{},,", r.run_index, r.label, ids, n_tokens);
                }
                RejectReason::NspGate {
                    first_failing_pair,
                    score,
                } => {
                    let _ = writeln!(
                        out,
                        "{},{},{},nsp_gate,,{},{}",
                        r.run_index, r.label, ids, first_failing_pair, score
                    );
                }
            }
        }
        out
    }

    /// Provenance of emitted samples as CSV (`id,method,part_ids`).
    pub fn parts_csv(&self) -> String {
        let mut out = String::from("id,method,n_parts,part_ids\n");
        for (i, s) in self.samples.iter().enumerate() {
            let rec = s.to_record(i);
            let method = match s.method {
                ConcatMethod::Random => "random",
                ConcatMethod::Sequential => "sequential",
            };
            let _ = writeln!(out, "{},{},{},{}", rec.id, method, s.part_ids.len(), s.part_ids.join(" "));
        }
        out
    }
}

/// Partitions each label pool into disjoint runs. Pools are visited in
/// label order; a trailing remainder shorter than the minimum run length
/// is left unused.
pub fn propose_runs(
    records: &[LabeledSentence],
    run_length: &RangeInclusive<usize>,
    seed: u64,
) -> Result<Vec<CandidateRun>, ConcatError> {
    let (lo, hi) = (*run_length.start(), *run_length.end());
    if lo < 2 || hi < lo {
        return Err(ConcatError::InvalidRunLength(lo, hi));
    }
    let mut rng = seeded_rng(seed);
    let mut runs = Vec::new();
    for label in SentimentLabel::ALL {
        let mut pool: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, _)| i)
            .collect();
        pool.shuffle(&mut rng);
        let mut rest = &pool[..];
        loop {
            let len = rng.random_range(lo..=hi);
            if rest.len() < len {
                break;
            }
            let (run, tail) = rest.split_at(len);
            runs.push(CandidateRun {
                run_index: runs.len(),
                label,
                members: run.to_vec(),
            });
            rest = tail;
        }
    }
    Ok(runs)
}

enum RunOutcome {
    Accepted(ConcatSample),
    Rejected(RejectedRun),
}

fn evaluate_run<P: NspScorer + ?Sized>(
    run: &CandidateRun,
    records: &[LabeledSentence],
    tokenizer: &WordPiece,
    config: &ConcatConfig,
    gate: Option<&P>,
) -> Result<RunOutcome, ConcatError> {
    let texts: Vec<&str> = run.members.iter().map(|&i| records[i].text.as_str()).collect();
    let part_ids: Vec<String> = run.members.iter().map(|&i| records[i].id.clone()).collect();
    let reject = |reason| {
        debug!(run = run.run_index, ?reason, "run rejected");
        Ok(RunOutcome::Rejected(RejectedRun {
            run_index: run.run_index,
            label: run.label,
            part_ids: part_ids.clone(),
            reason,
        }))
    };
    if let Some(scorer) = gate {
        let outcome = predict_multiple_nsp(&texts, true, scorer)?;
        if !outcome.valid {
            let last = outcome.decisions.last().expect("invalid implies a decision");
            return reject(RejectReason::NspGate {
                first_failing_pair: last.pair_index,
                score: last.score,
            });
        }
    }
    let text = texts.join(" ");
    let n_tokens = tokenizer.token_count(&text, true);
    if n_tokens > config.max_tokens {
        return reject(RejectReason::TokenCap { n_tokens });
    }
    let method = if gate.is_some() {
        ConcatMethod::Sequential
    } else {
        ConcatMethod::Random
    };
    Ok(RunOutcome::Accepted(ConcatSample {
        text,
        label: run.label,
        part_ids,
        n_tokens,
        method,
    }))
}

fn build<P: NspScorer + ?Sized>(
    records: &[LabeledSentence],
    tokenizer: &WordPiece,
    config: &ConcatConfig,
    gate: Option<&P>,
) -> Result<ConcatBuild, ConcatError> {
    let runs = propose_runs(records, &config.run_length, config.seed)?;
    let outcomes = bounded_map(&runs, config.jobs, |run| {
        evaluate_run(run, records, tokenizer, config, gate)
    });
    let mut out = ConcatBuild::default();
    for outcome in outcomes {
        match outcome? {
            RunOutcome::Accepted(s) => out.samples.push(s),
            RunOutcome::Rejected(r) => out.rejected.push(r),
        }
    }
    Ok(out)
}

/// Concatenates seeded same-label runs without an NSP gate.
pub fn build_random_concat(
    records: &[LabeledSentence],
    tokenizer: &WordPiece,
    config: &ConcatConfig,
) -> Result<ConcatBuild, ConcatError> {
    build::<dyn NspScorer>(records, tokenizer, config, None)
}

/// Concatenates seeded same-label runs that pass the prefix-mode NSP gate.
pub fn build_sequential_concat<P: NspScorer + ?Sized>(
    records: &[LabeledSentence],
    scorer: &P,
    tokenizer: &WordPiece,
    config: &ConcatConfig,
) -> Result<ConcatBuild, ConcatError> {
    build(records, tokenizer, config, Some(scorer))
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;
    use crate::tokenization::Vocabulary;

    struct Scripted {
        scores: Vec<f64>,
        calls: Mutex<Vec<(String, String)>>,
    }

    impl Scripted {
        fn new(scores: &[f64]) -> Self {
            Self {
                scores: scores.to_vec(),
                calls: Mutex::new(Vec::new()),
            }
        }
    }

    impl NspScorer for Scripted {
        fn predict_nsp(&self, a: &str, b: &str) -> Result<f64, ScoreError> {
            let mut calls = self.calls.lock().unwrap();
            calls.push((a.to_string(), b.to_string()));
            Ok(self.scores[(calls.len() - 1).min(self.scores.len() - 1)])
        }
    }

    struct Constant(f64);

    impl NspScorer for Constant {
        fn predict_nsp(&self, _: &str, _: &str) -> Result<f64, ScoreError> {
            Ok(self.0)
        }
    }

    struct Down;

    impl NspScorer for Down {
        fn predict_nsp(&self, _: &str, _: &str) -> Result<f64, ScoreError> {
            Err(ScoreError::Timeout)
        }
    }

    #[test]
    fn always_passing_scorer() {
        let out = predict_multiple_nsp(&["a", "b", "c"], false, &Constant(1.0)).unwrap();
        assert!(out.valid);
        assert_eq!(out.decisions.len(), 2);
        assert_eq!(out.first_failure(), None);
    }

    #[test]
    fn early_exit_on_first_failure() {
        let s = Scripted::new(&[0.4, 0.9]);
        let out = predict_multiple_nsp(&["a", "b", "c"], false, &s).unwrap();
        assert!(!out.valid);
        assert_eq!(out.decisions.len(), 1);
        assert_eq!(s.calls.lock().unwrap().len(), 1);
    }

    #[test]
    fn threshold_is_exclusive() {
        let out = predict_multiple_nsp(&["a", "b"], false, &Constant(0.5)).unwrap();
        assert!(!out.valid);
        assert!(!out.decisions[0].passed);
        let out = predict_multiple_nsp(&["a", "b"], false, &Constant(0.5000001)).unwrap();
        assert!(out.valid);
    }

    #[test]
    fn prefix_mode_joins_with_spaces() {
        let s = Scripted::new(&[0.9]);
        predict_multiple_nsp(&["A x.", "B y.", "C z.", "D."], true, &s).unwrap();
        let calls = s.calls.lock().unwrap();
        assert_eq!(
            *calls,
            [
                ("A x.".to_string(), "B y.".to_string()),
                ("A x. B y.".to_string(), "C z.".to_string()),
                ("A x. B y. C z.".to_string(), "D.".to_string()),
            ]
        );
    }

    #[test]
    fn pairwise_mode_uses_adjacent_sentences() {
        let s = Scripted::new(&[0.9]);
        predict_multiple_nsp(&["a", "b", "c"], false, &s).unwrap();
        let calls = s.calls.lock().unwrap();
        assert_eq!(calls[1], ("b".to_string(), "c".to_string()));
    }

    #[test]
    fn too_few_and_scorer_errors() {
        assert_eq!(
            predict_multiple_nsp(&["only"], false, &Constant(1.0)),
            Err(ConcatError::TooFewSentences(1))
        );
        assert_eq!(
            predict_multiple_nsp(&["a", "b"], true, &Down),
            Err(ConcatError::ScorerUnavailable(ScoreError::Timeout))
        );
    }

    fn tokenizer() -> WordPiece {
        let mut toks = vec!["[PAD]", "[UNK]", "[CLS]", "[SEP]", ".", "sales", "rose", "fell"];
        toks.extend(["w"]);
        WordPiece::new(Vocabulary::from_tokens(toks).unwrap())
    }

    fn pool(label: SentimentLabel, n: usize, text: impl Fn(usize) -> String) -> Vec<LabeledSentence> {
        (0..n)
            .map(|i| LabeledSentence {
                id: format!("{label}-{i}"),
                text: text(i),
                label,
                source: Source::Phrasebank,
                n_tokens: None,
            })
            .collect()
    }

    fn config(run: RangeInclusive<usize>) -> ConcatConfig {
        ConcatConfig {
            run_length: run,
            ..Default::default()
        }
    }

    #[test]
    fn zero_scorer_rejects_everything() {
        let records = pool(SentimentLabel::Positive, 10, |_| "sales rose .".into());
        let out = build_sequential_concat(&records, &Constant(0.0), &tokenizer(), &config(2..=2)).unwrap();
        assert!(out.samples.is_empty());
        assert_eq!(out.rejected.len(), 5);
        assert!(out
            .rejected
            .iter()
            .all(|r| matches!(r.reason, RejectReason::NspGate { first_failing_pair: 0, .. })));
    }

    #[test]
    fn token_cap_rejects_long_runs() {
        let long = vec!["w"; 300].join(" ");
        let records = pool(SentimentLabel::Neutral, 2, |_| long.clone());
        let out = build_sequential_concat(&records, &Constant(1.0), &tokenizer(), &config(2..=2)).unwrap();
        assert!(out.samples.is_empty());
        assert_eq!(out.rejected[0].reason, RejectReason::TokenCap { n_tokens: 602 });
    }

    #[test]
    fn passing_scorer_pairs_everything() {
        let records = pool(SentimentLabel::Negative, 10, |i| format!("sales fell . w{i}"));
        let out = build_sequential_concat(&records, &Constant(1.0), &tokenizer(), &config(2..=2)).unwrap();
        assert_eq!(out.samples.len(), 5);
        assert!(out.samples.iter().all(|s| s.part_ids.len() == 2));
        assert!(out.samples.iter().all(|s| s.method == ConcatMethod::Sequential));
    }

    #[test]
    fn random_build_partitions_small_pool() {
        let records = pool(SentimentLabel::Positive, 4, |i| format!("sales rose {i}"));
        let out = build_random_concat(&records, &tokenizer(), &config(2..=2)).unwrap();
        assert_eq!(out.samples.len(), 2);
        let mut ids: Vec<_> = out.samples.iter().flat_map(|s| s.part_ids.clone()).collect();
        ids.sort();
        let mut expected: Vec<_> = records.iter().map(|r| r.id.clone()).collect();
        expected.sort();
        assert_eq!(ids, expected);
    }

    #[test]
    fn mixed_pool_yields_single_label_samples() {
        let mut records = pool(SentimentLabel::Positive, 7, |i| format!("sales rose {i}"));
        records.extend(pool(SentimentLabel::Negative, 9, |i| format!("sales fell {i}")));
        records.extend(pool(SentimentLabel::Neutral, 5, |i| format!("w {i}")));
        let out = build_random_concat(&records, &tokenizer(), &config(2..=4)).unwrap();
        assert!(!out.samples.is_empty());
        for s in &out.samples {
            for id in &s.part_ids {
                let part = records.iter().find(|r| &r.id == id).unwrap();
                assert_eq!(part.label, s.label);
            }
        }
    }

    #[test]
    fn invalid_run_length() {
        let records = pool(SentimentLabel::Positive, 4, |i| format!("{i}"));
        assert_eq!(
            build_random_concat(&records, &tokenizer(), &config(1..=3)),
            Err(ConcatError::InvalidRunLength(1, 3))
        );
        #[allow(clippy::reversed_empty_ranges)]
        let bad = config(5..=3);
        assert!(build_random_concat(&records, &tokenizer(), &bad).is_err());
    }

    #[test]
    fn parallel_gating_matches_serial() {
        let records = pool(SentimentLabel::Neutral, 200, |i| format!("sales rose {i} ."));
        let scorer = crate::scoring::MockScorer;
        let serial = build_sequential_concat(&records, &scorer, &tokenizer(), &config(2..=5)).unwrap();
        let mut cfg = config(2..=5);
        cfg.jobs = 8;
        let parallel = build_sequential_concat(&records, &scorer, &tokenizer(), &cfg).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn records_and_audit_csv() {
        let records = pool(SentimentLabel::Positive, 4, |i| format!("sales rose {i}"));
        let s = Scripted::new(&[0.9, 0.1]);
        let out = build_sequential_concat(&records, &s, &tokenizer(), &config(2..=2)).unwrap();
        assert_eq!(out.samples.len(), 1);
        let recs = out.records();
        assert_eq!(recs[0].id, "cs-1");
        assert_eq!(recs[0].source, Source::ConcatSequential);
        assert_eq!(recs[0].n_tokens, Some(out.samples[0].n_tokens));
        let csv = out.rejected_csv();
        assert!(csv.lines().nth(1).unwrap().contains(",nsp_gate,,0,0.1"));
    }
}
