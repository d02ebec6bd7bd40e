//! Scorers behind the NSP gate and sentiment evaluation.
//!
//! Two implementations share the [`NspScorer`] / [`SentimentScorer`] traits:
//! a deterministic hash-based [`MockScorer`] and a [`RemoteScorer`] that
//! speaks the JSON-over-HTTP protocol of the model server:
//!
//! ```text
//! POST /v1/nsp        {"sentence_a": s, "sentence_b": t} -> {"p_is_next": x}
//! POST /v1/sentiment  {"text": s} -> {"probs": {"negative": a, "neutral": b, "positive": c}}
//! GET  /v1/health     -> {"status": "ok", "model": name}
//! ```
//!
//! Scorers return raw probabilities; thresholding belongs to the caller.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::corpus::SentimentLabel;

pub const FNV_OFFSET_BASIS: u64 = 14695981039346656037;
pub const FNV_PRIME: u64 = 1099511628211;
/// Byte placed between the two sentences when hashing an NSP pair.
pub const PAIR_SEPARATOR: u8 = 0x1f;

const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScoreError {
    #[error("request timed out")]
    Timeout,
    #[error("remote returned HTTP status {0}")]
    RemoteError(u16),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

pub trait NspScorer: Send + Sync {
    /// Probability that `sentence_b` follows `sentence_a`.
    fn predict_nsp(&self, sentence_a: &str, sentence_b: &str) -> Result<f64, ScoreError>;
}

pub trait SentimentScorer: Send + Sync {
    fn classify_sentiment(&self, text: &str) -> Result<ClassProbs, ScoreError>;
}

impl<T: NspScorer + ?Sized> NspScorer for &T {
    fn predict_nsp(&self, a: &str, b: &str) -> Result<f64, ScoreError> {
        (**self).predict_nsp(a, b)
    }
}

impl<T: NspScorer + ?Sized> NspScorer for Box<T> {
    fn predict_nsp(&self, a: &str, b: &str) -> Result<f64, ScoreError> {
        (**self).predict_nsp(a, b)
    }
}

/// Probability vector over the three sentiment classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProbs {
    pub negative: f64,
    pub neutral: f64,
    pub positive: f64,
}

impl ClassProbs {
    pub fn one_hot(label: SentimentLabel) -> Self {
        let mut v = [0.0; 3];
        v[label.index()] = 1.0;
        Self::from_array(v)
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self {
            negative: v[0],
            neutral: v[1],
            positive: v[2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.negative, self.neutral, self.positive]
    }

    pub fn get(&self, label: SentimentLabel) -> f64 {
        self.to_array()[label.index()]
    }

    /// Highest-probability class; ties go to the lower ordinal.
    pub fn argmax(&self) -> SentimentLabel {
        let v = self.to_array();
        let mut best = 0;
        for i in 1..3 {
            if v[i] > v[best] {
                best = i;
            }
        }
        SentimentLabel::from_index(best).expect("index < 3")
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        let v = self.to_array();
        if v.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ScoreError::InvalidResponse(format!(
                "negative or non-finite probability in {v:?}"
            )));
        }
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(ScoreError::InvalidResponse(format!(
                "probabilities sum to {sum}"
            )));
        }
        Ok(())
    }
}

fn check_probability(p: f64) -> Result<f64, ScoreError> {
    if p.is_finite() && (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(ScoreError::InvalidResponse(format!(
            "p_is_next {p} outside [0, 1]"
        )))
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET_BASIS;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Hash-based scorer with fixed, language-independent outputs.
///
/// NSP: `h = fnv1a64(a ++ 0x1F ++ b)`, score `(h mod 1000) / 999`.
/// Sentiment: one-hot of class `fnv1a64(text) mod 3`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockScorer;

impl MockScorer {
    pub fn nsp_score(sentence_a: &str, sentence_b: &str) -> f64 {
        let mut bytes = Vec::with_capacity(sentence_a.len() + sentence_b.len() + 1);
        bytes.extend_from_slice(sentence_a.as_bytes());
        bytes.push(PAIR_SEPARATOR);
        bytes.extend_from_slice(sentence_b.as_bytes());
        (fnv1a64(&bytes) % 1000) as f64 / 999.0
    }
}

impl NspScorer for MockScorer {
    fn predict_nsp(&self, sentence_a: &str, sentence_b: &str) -> Result<f64, ScoreError> {
        Ok(Self::nsp_score(sentence_a, sentence_b))
    }
}

impl SentimentScorer for MockScorer {
    fn classify_sentiment(&self, text: &str) -> Result<ClassProbs, ScoreError> {
        if text.is_empty() {
            return Err(ScoreError::InvalidInput("empty text".into()));
        }
        let class = (fnv1a64(text.as_bytes()) % 3) as usize;
        Ok(ClassProbs::one_hot(
            SentimentLabel::from_index(class).expect("index < 3"),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

/// Environment variable that overrides the configured endpoint.
pub const ENDPOINT_ENV: &str = "FINCORPUS_BACKEND_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub retries: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            timeout_ms: 30_000,
            max_in_flight: 8,
            retries: 2,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.max_in_flight == 0 {
            return Err(ScoreError::InvalidConfig("max_in_flight must be >= 1".into()));
        }
        if self.kind == BackendKind::Remote && self.endpoint.as_deref().is_none_or(str::is_empty)
        {
            return Err(ScoreError::InvalidConfig("remote backend requires an endpoint".into()));
        }
        Ok(())
    }

    /// Applies [`ENDPOINT_ENV`] when it is set and non-empty.
    pub fn with_env_override(mut self) -> Self {
        if let Ok(url) = std::env::var(ENDPOINT_ENV) {
            if !url.trim().is_empty() {
                self.endpoint = Some(url.trim().to_string());
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NspScoreRequest {
    pub sentence_a: String,
    pub sentence_b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NspScoreResponse {
    pub p_is_next: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentScoreRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentScoreResponse {
    pub probs: ClassProbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model: String,
}

/// Blocking HTTP client for the model server. Shareable across threads.
pub struct RemoteScorer {
    agent: ureq::Agent,
    base: String,
    retries: u32,
}

impl RemoteScorer {
    pub fn new(config: &BackendConfig) -> Result<Self, ScoreError> {
        config.validate()?;
        let endpoint = config
            .endpoint
            .as_deref()
            .ok_or_else(|| ScoreError::InvalidConfig("remote backend requires an endpoint".into()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .max_idle_connections_per_host(config.max_in_flight)
            .build()
            .into();
        Ok(Self {
            agent,
            base: endpoint.trim_end_matches('/').to_string(),
            retries: config.retries,
        })
    }

    pub fn health(&self) -> Result<HealthResponse, ScoreError> {
        self.call(|| self.agent.get(format!("{}/v1/health", self.base)).call())
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, ScoreError> {
        let url = format!("{}{}", self.base, path);
        self.call(|| self.agent.post(&url).send_json(body))
    }

    /// Retries transport failures only; any HTTP response, well-formed or
    /// not, is final.
    fn call<Resp, F>(&self, mut send: F) -> Result<Resp, ScoreError>
    where
        Resp: for<'de> Deserialize<'de>,
        F: FnMut() -> Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    {
        let mut attempt = 0;
        loop {
            match send() {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if !(200..300).contains(&status) {
                        return Err(ScoreError::RemoteError(status));
                    }
                    return resp
                        .body_mut()
                        .read_json::<Resp>()
                        .map_err(|e| ScoreError::InvalidResponse(e.to_string()));
                }
                Err(err) => {
                    let mapped = match err {
                        ureq::Error::Timeout(_) => ScoreError::Timeout,
                        ureq::Error::StatusCode(code) => return Err(ScoreError::RemoteError(code)),
                        ureq::Error::Io(ref io) if io.kind() == std::io::ErrorKind::TimedOut => {
                            ScoreError::Timeout
                        }
                        other => ScoreError::Transport(other.to_string()),
                    };
                    if attempt >= self.retries {
                        return Err(mapped);
                    }
                    attempt += 1;
                    warn!(attempt, error = %mapped, "retrying scorer request");
                }
            }
        }
    }
}

impl NspScorer for RemoteScorer {
    fn predict_nsp(&self, sentence_a: &str, sentence_b: &str) -> Result<f64, ScoreError> {
        let req = NspScoreRequest {
            sentence_a: sentence_a.to_string(),
            sentence_b: sentence_b.to_string(),
        };
        let resp: NspScoreResponse = self.post("/v1/nsp", &req)?;
        check_probability(resp.p_is_next)
    }
}

impl SentimentScorer for RemoteScorer {
    fn classify_sentiment(&self, text: &str) -> Result<ClassProbs, ScoreError> {
        if text.is_empty() {
            return Err(ScoreError::InvalidInput("empty text".into()));
        }
        let req = SentimentScoreRequest {
            text: text.to_string(),
        };
        let resp: SentimentScoreResponse = self.post("/v1/sentiment", &req)?;
        resp.probs.validate()?;
        Ok(resp.probs)
    }
}

/// Either backend, chosen from a [`BackendConfig`].
pub enum Backend {
    Mock(MockScorer),
    Remote(RemoteScorer),
}

impl Backend {
    pub fn from_config(config: &BackendConfig) -> Result<Self, ScoreError> {
        config.validate()?;
        Ok(match config.kind {
            BackendKind::Mock => Backend::Mock(MockScorer),
            BackendKind::Remote => Backend::Remote(RemoteScorer::new(config)?),
        })
    }
}

impl NspScorer for Backend {
    fn predict_nsp(&self, a: &str, b: &str) -> Result<f64, ScoreError> {
        match self {
            Backend::Mock(m) => m.predict_nsp(a, b),
            Backend::Remote(r) => r.predict_nsp(a, b),
        }
    }
}

impl SentimentScorer for Backend {
    fn classify_sentiment(&self, text: &str) -> Result<ClassProbs, ScoreError> {
        match self {
            Backend::Mock(m) => m.classify_sentiment(text),
            Backend::Remote(r) => r.classify_sentiment(text),
        }
    }
}

/// Applies `f` to every item with at most `max_in_flight` calls running at
/// once. Output is positionally aligned with `items`.
pub fn bounded_map<T, R, F>(items: &[T], max_in_flight: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = max_in_flight.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}

/// Scores a batch; per-item failures are reported in place without
/// aborting the rest of the batch.
pub fn score_batch<T, R, F>(
    requests: &[T],
    max_in_flight: usize,
    score: F,
) -> Result<Vec<Result<R, ScoreError>>, ScoreError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R, ScoreError> + Sync,
{
    if requests.is_empty() {
        return Err(ScoreError::EmptyBatch);
    }
    Ok(bounded_map(requests, max_in_flight, score))
}
