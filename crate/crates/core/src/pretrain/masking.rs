use rand::seq::SliceRandom;
use rand::Rng;

use crate::bpe::{Vocab, MASK, SPECIALS};

use super::{GenerationConfig, PretrainError, PretrainingInstance};

/// Round half away from zero for the non-negative values used here, with a
/// small tolerance so that products like `0.15 * 10` count as exact halves.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Number of predictions for an instance with `maskable` candidate tokens.
pub(crate) fn num_predictions(maskable: usize, config: &GenerationConfig) -> usize {
    config
        .budget()
        .min(round_half_up(config.masked_lm_prob * maskable as f64).max(1))
}

/// Chooses prediction positions uniformly among non-special tokens and
/// replaces each with `[MASK]` (80%), itself (10%) or a uniformly drawn
/// non-special vocabulary piece (10%).
pub fn apply_masking<R: Rng>(
    mut instance: PretrainingInstance,
    vocab: &Vocab,
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<PretrainingInstance, PretrainError> {
    let mut candidates: Vec<usize> = instance
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| !SPECIALS.contains(&t.as_str()))
        .map(|(i, _)| i)
        .collect();
    if candidates.is_empty() {
        return Err(PretrainError::NoMaskableTokens);
    }
    let n = num_predictions(candidates.len(), config);
    candidates.shuffle(rng);
    let mut chosen = candidates[..n].to_vec();
    chosen.sort_unstable();

    let first_regular = SPECIALS.len() as u32;
    let mut labels = Vec::with_capacity(n);
    for &pos in &chosen {
        let original = instance.tokens[pos].clone();
        let replacement = if rng.gen::<f64>() < 0.8 {
            MASK.to_string()
        } else if rng.gen::<f64>() < 0.5 {
            original.clone()
        } else {
            let id = rng.gen_range(first_regular..vocab.len() as u32);
            vocab.piece(id).expect("id in range").to_string()
        };
        instance.tokens[pos] = replacement;
        labels.push(original);
    }
    instance.masked_positions = chosen;
    instance.masked_labels = labels;
    Ok(instance)
}
