use crate::bpe::{Vocab, PAD_ID};

use super::{GenerationConfig, PretrainError, PretrainingInstance};

/// Feature names in the order they are written.
pub const FEATURE_NAMES: [&str; 7] = [
    "input_ids",
    "input_mask",
    "segment_ids",
    "masked_lm_positions",
    "masked_lm_ids",
    "masked_lm_weights",
    "next_sentence_labels",
];

/// A fixed-width training example. Sequence features are padded with zeros
/// to `max_seq_length`, prediction features to the masking budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SerializedExample {
    pub input_ids: Vec<i64>,
    pub input_mask: Vec<i64>,
    pub segment_ids: Vec<i64>,
    pub masked_lm_positions: Vec<i64>,
    pub masked_lm_ids: Vec<i64>,
    pub masked_lm_weights: Vec<f32>,
    /// 1 when B is a random span.
    pub next_sentence_labels: i64,
}

pub fn serialize_example(
    instance: &PretrainingInstance,
    vocab: &Vocab,
    config: &GenerationConfig,
) -> Result<SerializedExample, PretrainError> {
    let budget = config.budget();
    instance
        .check(config.max_seq_length, budget)
        .map_err(PretrainError::InvalidInstance)?;
    let lookup = |t: &String| {
        vocab
            .id(t)
            .map(i64::from)
            .ok_or_else(|| PretrainError::PieceNotInVocab(t.clone()))
    };
    let mut input_ids = instance.tokens.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
    let mut input_mask = vec![1; input_ids.len()];
    let mut segment_ids: Vec<i64> = instance.segment_ids.iter().map(|&s| i64::from(s)).collect();
    let len = config.max_seq_length;
    input_ids.resize(len, i64::from(PAD_ID));
    input_mask.resize(len, 0);
    segment_ids.resize(len, 0);

    let mut masked_lm_positions: Vec<i64> = instance.masked_positions.iter().map(|&p| p as i64).collect();
    let mut masked_lm_ids = instance.masked_labels.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
    let mut masked_lm_weights = vec![1.0f32; masked_lm_ids.len()];
    masked_lm_positions.resize(budget, 0);
    masked_lm_ids.resize(budget, 0);
    masked_lm_weights.resize(budget, 0.0);

    Ok(SerializedExample {
        input_ids,
        input_mask,
        segment_ids,
        masked_lm_positions,
        masked_lm_ids,
        masked_lm_weights,
        next_sentence_labels: i64::from(instance.is_random_next),
    })
}
