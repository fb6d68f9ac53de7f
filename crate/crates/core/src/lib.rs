//! Corpus preparation and BERT pretraining-data generation.
//!
//! The crate is organised as a pipeline of independent stages:
//!
//! - [`ingest`]: corpus container formats and corpus statistics.
//! - [`clean`]: markup stripping, language filtering, exact deduplication,
//!   heuristic quality filters and lemma-driven truecasing.
//! - [`bpe`]: byte-pair-encoding vocabulary training, encoding and decoding.
//! - [`pretrain`]: masked-LM / next-sentence instance generation and sharded
//!   TFRecord serialization.
//! - [`metrics`]: tagging accuracy, conlleval-style entity F1 and
//!   classification accuracy.
//! - [`cli`]: configuration, the end-to-end pipeline and the command line.

pub mod bpe;
pub mod clean;
pub mod cli;
pub mod ingest;
pub mod metrics;
pub mod pretrain;

pub(crate) mod text;

pub use bpe::Vocab;
pub use ingest::{CorpusStats, Document, Format};
