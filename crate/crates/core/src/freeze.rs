//! Parameter accounting for an encoder-classifier under layer freezing,
//! and the fine-tuning hyperparameters handed to the training harness.
//!
//! The masked-LM head is not counted; the pooler is, when enabled.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FreezeError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("layer {layer} out of range 1..={layers}")]
    InvalidLayer { layer: usize, layers: usize },
    #[error("unrecognized freeze point {0:?}")]
    UnknownFreezePoint(String),
    #[error("invalid fine-tune config: {0}")]
    InvalidFineTune(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: u64,
    pub hidden: u64,
    pub layers: usize,
    pub intermediate: u64,
    pub max_positions: u64,
    pub type_vocab: u64,
    pub num_labels: u64,
    pub include_pooler: bool,
}

impl EncoderConfig {
    /// 12-layer, 768-hidden uncased base encoder with a 3-way classifier.
    pub const BASE: Self = Self {
        vocab_size: 30522,
        hidden: 768,
        layers: 12,
        intermediate: 3072,
        max_positions: 512,
        type_vocab: 2,
        num_labels: 3,
        include_pooler: true,
    };

    pub fn validate(&self) -> Result<(), FreezeError> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("hidden", self.hidden),
            ("intermediate", self.intermediate),
            ("max_positions", self.max_positions),
            ("type_vocab", self.type_vocab),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(FreezeError::InvalidConfig(format!("{name} must be positive")));
        }
        if self.layers == 0 {
            return Err(FreezeError::InvalidConfig("layers must be at least 1".into()));
        }
        if self.num_labels < 2 {
            return Err(FreezeError::InvalidConfig("num_labels must be at least 2".into()));
        }
        Ok(())
    }

    pub fn embedding_params(&self) -> u64 {
        let h = self.hidden;
        (self.vocab_size + self.max_positions + self.type_vocab) * h + 2 * h
    }

    /// Attention projections, attention layer norm, feed-forward, output layer norm.
    pub fn layer_params(&self) -> u64 {
        let (h, i) = (self.hidden, self.intermediate);
        4 * (h * h + h) + 2 * h + (h * i + i) + (i * h + h) + 2 * h
    }

    pub fn pooler_params(&self) -> u64 {
        if self.include_pooler {
            self.hidden * self.hidden + self.hidden
        } else {
            0
        }
    }

    pub fn classifier_params(&self) -> u64 {
        self.hidden * self.num_labels + self.num_labels
    }

    pub fn head_params(&self) -> u64 {
        self.pooler_params() + self.classifier_params()
    }

    /// Embeddings, each encoder layer, pooler and classifier, in network order.
    /// The counts sum to [`total_parameters`].
    pub fn blocks(&self) -> Vec<(String, u64)> {
        let mut out = vec![("embedding".to_string(), self.embedding_params())];
        out.extend((1..=self.layers).map(|k| (format!("layer_{k}"), self.layer_params())));
        if self.include_pooler {
            out.push(("pooler".to_string(), self.pooler_params()));
        }
        out.push(("classifier".to_string(), self.classifier_params()));
        out
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::BASE
    }
}

pub fn total_parameters(config: &EncoderConfig) -> Result<u64, FreezeError> {
    config.validate()?;
    Ok(config.embedding_params() + config.layers as u64 * config.layer_params() + config.head_params())
}

/// How deep the frozen prefix reaches. `Layer(L)` leaves only the head trainable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FreezeThrough {
    None,
    Embedding,
    Layer(usize),
}

impl FreezeThrough {
    fn frozen_layers(self) -> usize {
        match self {
            FreezeThrough::None | FreezeThrough::Embedding => 0,
            FreezeThrough::Layer(k) => k,
        }
    }
}

impl fmt::Display for FreezeThrough {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FreezeThrough::None => f.write_str("none"),
            FreezeThrough::Embedding => f.write_str("embedding"),
            FreezeThrough::Layer(k) => write!(f, "layer_{k}"),
        }
    }
}

impl FromStr for FreezeThrough {
    type Err = FreezeError;

    /// Accepts `none`, `embedding`, `layer_K`, `layer K` or a bare `K`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "none" => return Ok(FreezeThrough::None),
            "embedding" | "embeddings" => return Ok(FreezeThrough::Embedding),
            _ => {}
        }
        let digits = t
            .strip_prefix("layer")
            .map(|r| r.trim_start_matches(['_', ' ', '-']))
            .unwrap_or(&t);
        digits
            .parse::<usize>()
            .map(FreezeThrough::Layer)
            .map_err(|_| FreezeError::UnknownFreezePoint(s.to_string()))
    }
}

impl Serialize for FreezeThrough {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FreezeThrough {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezePlan {
    pub freeze_through: FreezeThrough,
    pub trainable_count: u64,
    pub total_count: u64,
}

pub fn trainable_after_freeze(
    config: &EncoderConfig,
    freeze_through: FreezeThrough,
) -> Result<FreezePlan, FreezeError> {
    let total = total_parameters(config)?;
    let k = freeze_through.frozen_layers();
    if matches!(freeze_through, FreezeThrough::Layer(_)) && (k == 0 || k > config.layers) {
        return Err(FreezeError::InvalidLayer { layer: k, layers: config.layers });
    }
    let frozen = match freeze_through {
        FreezeThrough::None => 0,
        _ => config.embedding_params() + k as u64 * config.layer_params(),
    };
    Ok(FreezePlan {
        freeze_through,
        trainable_count: total - frozen,
        total_count: total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezeRow {
    pub freeze_through: FreezeThrough,
    pub trainable: u64,
    pub trainable_millions: f64,
}

/// Formats a count in millions: whole millions from 1M up, one decimal below.
pub fn millions_label(count: u64) -> String {
    let m = count as f64 / 1e6;
    if m >= 1.0 {
        format!("{}M", m.round() as u64)
    } else {
        format!("{m:.1}M")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezeTable {
    pub config: EncoderConfig,
    pub total: u64,
    pub per_layer: u64,
    pub rows: Vec<FreezeRow>,
}

impl FreezeTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("freeze_through,trainable_params,trainable_millions\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.6}", r.freeze_through, r.trainable, r.trainable_millions);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<18} {:>14} {:>8}", "Frozen through", "Trainable", "Approx.");
        for r in &self.rows {
            let name = match r.freeze_through {
                FreezeThrough::Embedding => "Embedding Layer".to_string(),
                FreezeThrough::Layer(k) => format!("Layer {k}"),
                FreezeThrough::None => "None".to_string(),
            };
            let _ = writeln!(out, "{:<18} {:>14} {:>8}", name, r.trainable, millions_label(r.trainable));
        }
        let _ = writeln!(out, "total {} / per layer {}", self.total, self.per_layer);
        out
    }
}

/// Rows for embedding and layers 1..=L.
pub fn freeze_table(config: &EncoderConfig) -> Result<FreezeTable, FreezeError> {
    let total = total_parameters(config)?;
    let points = std::iter::once(FreezeThrough::Embedding).chain((1..=config.layers).map(FreezeThrough::Layer));
    let rows = points
        .map(|p| {
            let plan = trainable_after_freeze(config, p)?;
            Ok(FreezeRow {
                freeze_through: p,
                trainable: plan.trainable_count,
                trainable_millions: plan.trainable_count as f64 / 1e6,
            })
        })
        .collect::<Result<Vec<_>, FreezeError>>()?;
    Ok(FreezeTable {
        config: *config,
        total,
        per_layer: config.layer_params(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineTuneConfig {
    pub learning_rate: f64,
    pub max_token_length: u32,
    pub batch_size: u32,
    pub weight_decay: f64,
    pub dropout: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub epochs: u32,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            max_token_length: 512,
            batch_size: 8,
            weight_decay: 0.01,
            dropout: 0.2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            epochs: 4,
            seed: 42,
        }
    }
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<(), FreezeError> {
        let bad = |m: &str| Err(FreezeError::InvalidFineTune(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.max_token_length == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("max_token_length, batch_size and epochs must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay > 0.0) {
            return bad("weight_decay must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(b > 0.0 && b < 1.0) {
                return bad("adam betas must lie in (0, 1)");
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, FreezeError> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| FreezeError::InvalidFineTune(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
