//! Corpus engineering and evaluation for financial sentiment classification.
//!
//! The crate covers the full data path around a BERT-style classifier:
//! phrasebank ingestion and splitting ([`corpus`]), WordPiece token counting
//! ([`tokenization`]), next-sentence-prediction pair generation ([`nsp`]),
//! NSP-gated long-sentence construction ([`concat`]), the scorer interface
//! and its HTTP client ([`scoring`]), classification metrics ([`eval`]) and
//! parameter accounting for layer freezing ([`freeze`]).

pub mod concat;
pub mod corpus;
pub mod eval;
pub mod freeze;
pub mod nsp;
pub mod scoring;
pub mod tokenization;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use corpus::{LabeledSentence, SentimentLabel, Source};

/// Version string recorded in run manifests.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The one RNG used for every seeded step, so a seed means the same stream
/// across modules and platforms.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}
