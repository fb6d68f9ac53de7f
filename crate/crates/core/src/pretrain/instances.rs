use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use xxhash_rust::xxh3::xxh3_64;

use crate::bpe::{Vocab, CLS, SEP, SPECIALS};
use crate::ingest::Document;

use super::masking::apply_masking;
use super::{GenerationConfig, PretrainError};

/// A document as a list of non-empty sentences of vocabulary pieces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDocument {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
}

impl TokenizedDocument {
    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// One sentence per non-empty line; sentences that encode to nothing are dropped.
pub fn tokenize_document(doc: &Document, vocab: &Vocab) -> TokenizedDocument {
    TokenizedDocument {
        id: doc.id.clone(),
        sentences: doc
            .sentences()
            .map(|s| vocab.encode_pieces(s).into_iter().map(String::from).collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect(),
    }
}

/// `[CLS] A [SEP] B [SEP]` with masking applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainingInstance {
    pub tokens: Vec<String>,
    pub segment_ids: Vec<u8>,
    /// Strictly increasing.
    pub masked_positions: Vec<usize>,
    /// Original piece at each masked position.
    pub masked_labels: Vec<String>,
    pub is_random_next: bool,
}

impl PretrainingInstance {
    /// Checks the structural invariants every emitted instance satisfies.
    pub fn check(&self, max_seq_length: usize, budget: usize) -> Result<(), String> {
        let n = self.tokens.len();
        if n > max_seq_length {
            return Err(format!("{n} tokens exceed max_seq_length {max_seq_length}"));
        }
        if self.segment_ids.len() != n {
            return Err("segment_ids length differs from tokens".into());
        }
        if self.tokens.first().map(String::as_str) != Some(CLS) {
            return Err("first token is not [CLS]".into());
        }
        let seps: Vec<usize> = (0..n).filter(|&i| self.tokens[i] == SEP).collect();
        if seps.len() != 2 || seps[1] != n - 1 || seps[0] < 2 || seps[1] - seps[0] < 2 {
            return Err(format!("[SEP] positions {seps:?} in a sequence of {n}"));
        }
        for (i, &s) in self.segment_ids.iter().enumerate() {
            if s != u8::from(i > seps[0]) {
                return Err(format!("segment id {s} at position {i}"));
            }
        }
        if self.masked_positions.len() != self.masked_labels.len() {
            return Err("masked positions and labels differ in length".into());
        }
        if self.masked_positions.len() > budget {
            return Err(format!("{} predictions exceed budget {budget}", self.masked_positions.len()));
        }
        if self.masked_positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err("masked positions not strictly increasing".into());
        }
        for (&p, label) in self.masked_positions.iter().zip(&self.masked_labels) {
            if p >= n || p == 0 || seps.contains(&p) {
                return Err(format!("masked position {p} is out of range or structural"));
            }
            if SPECIALS.contains(&label.as_str()) {
                return Err(format!("special label {label} at {p}"));
            }
        }
        Ok(())
    }
}

/// RNG for one (document, duplication round) pair; independent of scheduling.
pub fn document_rng(seed: u64, doc_id: &str, dupe: usize) -> ChaCha8Rng {
    let mut key = Vec::with_capacity(doc_id.len() + 9);
    key.extend_from_slice(doc_id.as_bytes());
    key.push(0xff);
    key.extend_from_slice(&(dupe as u64).to_le_bytes());
    ChaCha8Rng::seed_from_u64(seed ^ xxh3_64(&key))
}

/// All instances for `docs[doc_index]` in round `dupe`.
///
/// Sentences are packed into chunks up to a target length (occasionally a
/// shorter random one), each chunk is split into A and B at a sentence
/// boundary, and with probability `random_next_prob` B is replaced by a span
/// from another document. Unused chunk sentences are put back in that case.
pub fn instances_from_document(
    docs: &[TokenizedDocument],
    doc_index: usize,
    dupe: usize,
    vocab: &Vocab,
    config: &GenerationConfig,
) -> Result<Vec<PretrainingInstance>, PretrainError> {
    if docs.len() < 2 {
        return Err(PretrainError::CorpusTooSmall(docs.len()));
    }
    let doc = &docs[doc_index].sentences;
    let mut rng = document_rng(config.seed, &docs[doc_index].id, dupe);
    let max_num_tokens = config.max_seq_length - 3;
    let target = if rng.gen::<f64>() < config.short_seq_prob {
        rng.gen_range(2..=max_num_tokens)
    } else {
        max_num_tokens
    };

    let mut out = Vec::new();
    let mut chunk: Vec<usize> = Vec::new();
    let mut chunk_len = 0;
    let mut i = 0;
    while i < doc.len() {
        chunk.push(i);
        chunk_len += doc[i].len();
        if i + 1 == doc.len() || chunk_len >= target {
            let a_end = if chunk.len() >= 2 { rng.gen_range(1..chunk.len()) } else { 1 };
            let mut tokens_a: Vec<String> = chunk[..a_end].iter().flat_map(|&j| doc[j].iter().cloned()).collect();
            // a lone one-piece sentence at the end of a document cannot form a pair
            let degenerate = chunk.len() == 1 && i + 1 == doc.len() && tokens_a.len() < 2;
            if !degenerate {
                let is_random_next = rng.gen_bool(config.random_next_prob);
                let mut tokens_b: Vec<String> = Vec::new();
                if is_random_next {
                    let target_b = target.saturating_sub(tokens_a.len()).max(1);
                    let mut other = rng.gen_range(0..docs.len() - 1);
                    if other >= doc_index {
                        other += 1;
                    }
                    let other = &docs[other].sentences;
                    let start = rng.gen_range(0..other.len());
                    for sentence in &other[start..] {
                        tokens_b.extend(sentence.iter().cloned());
                        if tokens_b.len() >= target_b {
                            break;
                        }
                    }
                    i -= chunk.len() - a_end;
                } else if chunk.len() >= 2 {
                    tokens_b = chunk[a_end..].iter().flat_map(|&j| doc[j].iter().cloned()).collect();
                } else if i + 1 < doc.len() {
                    i += 1;
                    tokens_b = doc[i].clone();
                } else {
                    let split = rng.gen_range(1..tokens_a.len());
                    tokens_b = tokens_a.split_off(split);
                }
                truncate_pair(&mut tokens_a, &mut tokens_b, max_num_tokens, &mut rng);
                let instance = assemble(tokens_a, tokens_b, is_random_next);
                out.push(match apply_masking(instance.clone(), vocab, config, &mut rng) {
                    Err(PretrainError::NoMaskableTokens) => instance,
                    other => other?,
                });
            }
            chunk.clear();
            chunk_len = 0;
        }
        i += 1;
    }
    Ok(out)
}

fn truncate_pair<R: Rng>(a: &mut Vec<String>, b: &mut Vec<String>, max_num_tokens: usize, rng: &mut R) {
    while a.len() + b.len() > max_num_tokens {
        let longer = if a.len() > b.len() { &mut *a } else { &mut *b };
        debug_assert!(longer.len() >= 2);
        if rng.gen::<f64>() < 0.5 {
            longer.remove(0);
        } else {
            longer.pop();
        }
    }
}

fn assemble(a: Vec<String>, b: Vec<String>, is_random_next: bool) -> PretrainingInstance {
    let mut tokens = Vec::with_capacity(a.len() + b.len() + 3);
    let mut segment_ids = Vec::with_capacity(tokens.capacity());
    tokens.push(CLS.to_string());
    segment_ids.push(0);
    segment_ids.extend(std::iter::repeat_n(0, a.len() + 1));
    tokens.extend(a);
    tokens.push(SEP.to_string());
    segment_ids.extend(std::iter::repeat_n(1, b.len() + 1));
    tokens.extend(b);
    tokens.push(SEP.to_string());
    PretrainingInstance {
        tokens,
        segment_ids,
        masked_positions: Vec::new(),
        masked_labels: Vec::new(),
        is_random_next,
    }
}

/// Instances for every round and document, in (round, document) order.
/// Documents without sentences are ignored.
pub fn build_instances(
    docs: &[TokenizedDocument],
    vocab: &Vocab,
    config: &GenerationConfig,
) -> Result<Vec<PretrainingInstance>, PretrainError> {
    config.validate()?;
    let docs: Vec<TokenizedDocument> = docs.iter().filter(|d| !d.is_empty()).cloned().collect();
    if docs.len() < 2 {
        return Err(PretrainError::CorpusTooSmall(docs.len()));
    }
    let per_doc: Vec<Vec<PretrainingInstance>> = (0..config.dupe_factor)
        .flat_map(|dupe| (0..docs.len()).map(move |d| (dupe, d)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(dupe, d)| instances_from_document(&docs, d, dupe, vocab, config))
        .collect::<Result<_, _>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpe::{train_bpe, MASK};

    fn corpus() -> (Vocab, Vec<TokenizedDocument>) {
        let texts: Vec<String> = (0..6)
            .map(|d| {
                (0..8)
                    .map(|s| format!("lause {s} dokumendis {d} sisaldab mitut sõna ja veel mõnda"))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
            .collect();
        let vocab = train_bpe(texts.iter().map(String::as_str), 80).unwrap();
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| tokenize_document(&Document::new(format!("d{i}"), t.as_str()), &vocab))
            .collect();
        (vocab, docs)
    }

    #[test]
    fn instances_are_well_formed() {
        let (vocab, docs) = corpus();
        for len in [5, 8, 16, 32, 128] {
            let config = GenerationConfig { max_seq_length: len, dupe_factor: 2, ..Default::default() };
            let instances = build_instances(&docs, &vocab, &config).unwrap();
            assert!(!instances.is_empty());
            for inst in &instances {
                inst.check(len, config.budget()).unwrap();
                assert!(!inst.masked_positions.is_empty());
            }
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (vocab, docs) = corpus();
        let config = GenerationConfig { max_seq_length: 32, dupe_factor: 3, ..Default::default() };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| build_instances(&docs, &vocab, &config).unwrap())
        };
        assert_eq!(run(1), run(4));
        let other = GenerationConfig { seed: 7, ..config.clone() };
        assert_ne!(run(1), build_instances(&docs, &vocab, &other).unwrap());
    }

    #[test]
    fn random_next_extremes() {
        let (vocab, docs) = corpus();
        for (p, expect) in [(0.0, false), (1.0, true)] {
            let config = GenerationConfig { max_seq_length: 24, random_next_prob: p, ..Default::default() };
            let instances = build_instances(&docs, &vocab, &config).unwrap();
            assert!(instances.iter().all(|i| i.is_random_next == expect));
        }
    }

    #[test]
    fn masked_labels_restore_original() {
        let (vocab, docs) = corpus();
        let config = GenerationConfig { max_seq_length: 64, masked_lm_prob: 0.0, dupe_factor: 1, ..Default::default() };
        // budget 0 leaves the sequence untouched
        let plain = build_instances(&docs, &vocab, &config).unwrap();
        assert!(plain.iter().all(|i| i.masked_positions.is_empty()));
        assert!(plain.iter().all(|i| !i.tokens.iter().any(|t| t == MASK)));
    }

    #[test]
    fn too_small_corpus() {
        let (vocab, docs) = corpus();
        let config = GenerationConfig::default();
        assert!(matches!(
            build_instances(&docs[..1], &vocab, &config),
            Err(PretrainError::CorpusTooSmall(1))
        ));
    }
}
