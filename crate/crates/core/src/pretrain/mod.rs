//! Masked-LM / next-sentence pretraining data.
//!
//! Instances are generated per (document, duplication round) with an RNG
//! seeded from the global seed and a stable hash of the document id and
//! round, so the output is identical for any number of worker threads. The
//! output order is (round, document order) and records are dealt round-robin
//! to the shard files by that global index.

use std::path::PathBuf;

use thiserror::Error;

mod example;
mod instances;
mod masking;
pub mod proto;
pub mod tfrecord;

pub use example::{serialize_example, SerializedExample, FEATURE_NAMES};
pub use instances::{
    build_instances, document_rng, instances_from_document, tokenize_document, PretrainingInstance,
    TokenizedDocument,
};
pub use masking::{apply_masking, round_half_up};
pub use tfrecord::{crc32c, mask_crc, read_tfrecords, shard_path, write_tfrecords, CrcField, ShardWriter};

#[derive(Debug, Error)]
pub enum PretrainError {
    #[error("need at least two non-empty documents, got {0}")]
    CorpusTooSmall(usize),
    #[error("instance has no maskable tokens")]
    NoMaskableTokens,
    #[error("piece {0:?} is not in the vocabulary")]
    PieceNotInVocab(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("corrupt record at byte offset {offset} ({which} checksum mismatch) in {path}")]
    CorruptRecord {
        path: PathBuf,
        offset: u64,
        which: CrcField,
    },
    #[error("truncated record at byte offset {offset} in {path}")]
    Truncated { path: PathBuf, offset: u64 },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("missing feature {0:?}")]
    MissingFeature(&'static str),
    #[error("malformed Example payload: {0}")]
    MalformedExample(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub max_seq_length: usize,
    pub masked_lm_prob: f64,
    pub random_next_prob: f64,
    pub short_seq_prob: f64,
    pub dupe_factor: usize,
    pub shards: usize,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            max_seq_length: 128,
            masked_lm_prob: 0.15,
            random_next_prob: 0.5,
            short_seq_prob: 0.1,
            dupe_factor: 10,
            shards: 4,
            seed: 12345,
        }
    }
}

impl GenerationConfig {
    /// Maximum number of masked predictions per sequence.
    pub fn budget(&self) -> usize {
        masked_budget(self.max_seq_length, self.masked_lm_prob)
    }

    pub fn validate(&self) -> Result<(), PretrainError> {
        let bad = |m: String| Err(PretrainError::InvalidConfig(m));
        // [CLS] A [SEP] B [SEP] with non-empty A and B
        if self.max_seq_length < 5 {
            return bad(format!("max_seq_length must be at least 5, got {}", self.max_seq_length));
        }
        for (name, p) in [
            ("masked_lm_prob", self.masked_lm_prob),
            ("random_next_prob", self.random_next_prob),
            ("short_seq_prob", self.short_seq_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if self.shards == 0 {
            return bad("shards must be at least 1".into());
        }
        if self.dupe_factor == 0 {
            return bad("dupe_factor must be at least 1".into());
        }
        Ok(())
    }
}

/// `ceil(masked_lm_prob * max_seq_length)`; 20 for (128, 0.15), 77 for (512, 0.15).
pub fn masked_budget(max_seq_length: usize, masked_lm_prob: f64) -> usize {
    let x = masked_lm_prob * max_seq_length as f64;
    // 0.15 * 100 evaluates to 15.000000000000002; do not let that round up.
    (x - 1e-9).ceil().max(0.0) as usize
}
