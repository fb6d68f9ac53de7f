//! Character-level byte-pair-encoding vocabulary.
//!
//! Text is NFKC-normalised and split on whitespace. Every word becomes the
//! boundary symbol `▁` followed by its characters, and the trainer then
//! repeatedly merges the most frequent adjacent symbol pair. Equal counts
//! are broken by the lexicographically smallest concatenated piece, then by
//! the smallest left piece. A merge whose result already exists as a piece
//! (reachable through a different split) is never learned, so every
//! non-special multi-character piece has exactly one merge and
//! `merges == pieces - specials - alphabet`.
//!
//! The first five ids are reserved for `[PAD] [UNK] [CLS] [SEP] [MASK]`.
//! Characters never seen in training encode to `[UNK]`; there is no byte
//! fallback.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

pub const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];
pub const WORD_BOUNDARY: char = '▁';

pub const VOCAB_FILE: &str = "vocab.txt";
pub const MERGES_FILE: &str = "merges.txt";

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("vocab size {requested} too small: specials and alphabet already need {minimum}")]
    VocabSizeTooSmall { requested: usize, minimum: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("id {0} is out of range")]
    IdOutOfRange(u32),
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

pub fn normalize(text: &str) -> String {
    text.nfkc().collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
    merges: Vec<(String, String)>,
    /// (left, right) -> (rank, merged id)
    ranks: HashMap<(u32, u32), (u32, u32)>,
    alphabet_len: usize,
}

impl Vocab {
    /// Builds a vocabulary from its file representation: specials, then the
    /// single-character alphabet, then one merged piece per merge in order.
    pub fn from_parts(pieces: Vec<String>, merges: Vec<(String, String)>) -> Result<Self, BpeError> {
        let invalid = |m: String| Err(BpeError::InvalidVocab(m));
        if pieces.len() < SPECIALS.len() || pieces[..SPECIALS.len()] != SPECIALS {
            return invalid("the first pieces must be [PAD] [UNK] [CLS] [SEP] [MASK]".into());
        }
        let Some(alphabet_len) = (pieces.len() - SPECIALS.len()).checked_sub(merges.len()) else {
            return invalid("more merges than pieces".into());
        };
        let mut index = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if p.is_empty() || p.contains(char::is_whitespace) {
                return invalid(format!("piece {i} is empty or contains whitespace"));
            }
            if index.insert(p.clone(), i as u32).is_some() {
                return invalid(format!("duplicate piece {p:?}"));
            }
        }
        let merged_start = SPECIALS.len() + alphabet_len;
        if let Some(p) = pieces[SPECIALS.len()..merged_start].iter().find(|p| p.chars().count() != 1) {
            return invalid(format!("alphabet piece {p:?} is not a single character"));
        }
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (left, right)) in merges.iter().enumerate() {
            let new_id = merged_start + rank;
            let (Some(&l), Some(&r)) = (index.get(left), index.get(right)) else {
                return invalid(format!("merge {rank} uses an unknown piece"));
            };
            if l as usize >= new_id || r as usize >= new_id || (l as usize) < SPECIALS.len() || (r as usize) < SPECIALS.len() {
                return invalid(format!("merge {rank} refers to a special or later piece"));
            }
            if pieces[new_id] != format!("{left}{right}") {
                return invalid(format!("piece {new_id} is not the result of merge {rank}"));
            }
            ranks.insert((l, r), (rank as u32, new_id as u32));
        }
        Ok(Vocab {
            pieces,
            index,
            merges,
            ranks,
            alphabet_len,
        })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn alphabet_len(&self) -> usize {
        self.alphabet_len
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIALS.len()
    }

    /// Encodes one whitespace-free, already normalised word.
    pub fn encode_word(&self, word: &str) -> Vec<u32> {
        let mut buf = [0u8; 4];
        let mut symbols: Vec<u32> = std::iter::once(WORD_BOUNDARY)
            .chain(word.chars())
            .map(|c| self.id(c.encode_utf8(&mut buf)).unwrap_or(UNK_ID))
            .collect();
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(rank, id)| (rank, w[0], w[1], id)))
                .min();
            let Some((_, left, right, new_id)) = best else {
                break;
            };
            merge_pair(&mut symbols, left, right, new_id);
        }
        symbols
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        normalize(text)
            .split_whitespace()
            .flat_map(|w| self.encode_word(w))
            .collect()
    }

    pub fn encode_pieces(&self, text: &str) -> Vec<&str> {
        self.encode(text)
            .into_iter()
            .map(|id| self.pieces[id as usize].as_str())
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String, BpeError> {
        let mut out = String::new();
        for &id in ids {
            let piece = self.piece(id).ok_or(BpeError::IdOutOfRange(id))?;
            out.push_str(piece);
        }
        Ok(out.replace(WORD_BOUNDARY, " ").trim().to_string())
    }

    pub fn write_vocab<W: Write>(&self, mut out: W) -> io::Result<()> {
        for p in &self.pieces {
            writeln!(out, "{p}")?;
        }
        Ok(())
    }

    pub fn write_merges<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (l, r) in &self.merges {
            writeln!(out, "{l} {r}")?;
        }
        Ok(())
    }

    /// Writes `vocab.txt` and `merges.txt` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), BpeError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut v = Vec::new();
        self.write_vocab(&mut v)?;
        fs::write(dir.join(VOCAB_FILE), v)?;
        let mut m = Vec::new();
        self.write_merges(&mut m)?;
        fs::write(dir.join(MERGES_FILE), m)?;
        Ok(())
    }

    pub fn parse(vocab_txt: &str, merges_txt: &str) -> Result<Self, BpeError> {
        let pieces = vocab_txt.lines().map(str::to_string).collect();
        let mut merges = Vec::new();
        for (i, line) in merges_txt.lines().enumerate() {
            let (l, r) = line
                .split_once(' ')
                .filter(|(l, r)| !l.is_empty() && !r.is_empty() && !r.contains(' '))
                .ok_or_else(|| BpeError::InvalidVocab(format!("merges line {} is not `left right`", i + 1)))?;
            merges.push((l.to_string(), r.to_string()));
        }
        Vocab::from_parts(pieces, merges)
    }

    /// Loads `vocab.txt` and `merges.txt` from `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, BpeError> {
        let dir = dir.as_ref();
        let vocab = fs::read_to_string(dir.join(VOCAB_FILE))?;
        let merges = fs::read_to_string(dir.join(MERGES_FILE))?;
        Vocab::parse(&vocab, &merges)
    }
}

/// Replaces non-overlapping `left right` occurrences, left to right.
fn merge_pair(symbols: &mut Vec<u32>, left: u32, right: u32, new_id: u32) {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(new_id);
            i += 2;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    *symbols = out;
}

/// Word-frequency accumulator. Counts from independent shards can be merged
/// before training.
#[derive(Debug, Default, Clone)]
pub struct WordCounts(HashMap<String, u64>);

impl WordCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_text(&mut self, text: &str) {
        for w in normalize(text).split_whitespace() {
            *self.0.entry(w.to_string()).or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, other: WordCounts) {
        for (w, c) in other.0 {
            *self.0.entry(w).or_insert(0) += c;
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    concat: String,
    left: String,
    pair: (u32, u32),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| Reverse(&self.concat).cmp(&Reverse(&other.concat)))
            .then_with(|| Reverse(&self.left).cmp(&Reverse(&other.left)))
            .then_with(|| Reverse(self.pair).cmp(&Reverse(other.pair)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Trains a vocabulary of exactly `vocab_size` pieces, or fewer if the
/// corpus runs out of pairs to merge.
pub fn train_from_counts(counts: &WordCounts, vocab_size: usize) -> Result<Vocab, BpeError> {
    if counts.is_empty() {
        return Err(BpeError::EmptyCorpus);
    }
    let alphabet: BTreeSet<char> = counts
        .0
        .keys()
        .flat_map(|w| w.chars())
        .chain(std::iter::once(WORD_BOUNDARY))
        .collect();
    let minimum = SPECIALS.len() + alphabet.len() + 1;
    if vocab_size < minimum {
        return Err(BpeError::VocabSizeTooSmall {
            requested: vocab_size,
            minimum,
        });
    }

    let mut pieces: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    pieces.extend(alphabet.iter().map(|c| c.to_string()));
    let mut index: HashMap<String, u32> = pieces.iter().enumerate().map(|(i, p)| (p.clone(), i as u32)).collect();

    let mut sorted: Vec<(&String, &u64)> = counts.0.iter().collect();
    sorted.sort();
    let mut words: Vec<Vec<u32>> = Vec::with_capacity(sorted.len());
    let mut freqs: Vec<u64> = Vec::with_capacity(sorted.len());
    for (w, &c) in sorted {
        let mut buf = [0u8; 4];
        words.push(
            std::iter::once(WORD_BOUNDARY)
                .chain(w.chars())
                .map(|ch| index[&*ch.encode_utf8(&mut buf)])
                .collect(),
        );
        freqs.push(c);
    }

    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut pair_words: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for (wi, w) in words.iter().enumerate() {
        for p in w.windows(2) {
            let pair = (p[0], p[1]);
            *pair_counts.entry(pair).or_insert(0) += freqs[wi];
            let list = pair_words.entry(pair).or_default();
            if list.last() != Some(&(wi as u32)) {
                list.push(wi as u32);
            }
        }
    }

    let candidate = |pair: (u32, u32), count: u64, pieces: &[String]| Candidate {
        count,
        concat: format!("{}{}", pieces[pair.0 as usize], pieces[pair.1 as usize]),
        left: pieces[pair.0 as usize].clone(),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> = pair_counts
        .iter()
        .map(|(&pair, &count)| candidate(pair, count, &pieces))
        .collect();

    let mut merges = Vec::new();
    let mut forbidden: HashSet<(u32, u32)> = HashSet::new();
    while pieces.len() < vocab_size {
        let Some(top) = heap.pop() else { break };
        let actual = pair_counts.get(&top.pair).copied().unwrap_or(0);
        if actual == 0 || forbidden.contains(&top.pair) {
            continue;
        }
        if actual != top.count {
            heap.push(Candidate { count: actual, ..top });
            continue;
        }
        if index.contains_key(&top.concat) {
            forbidden.insert(top.pair);
            continue;
        }

        let (left, right) = top.pair;
        let new_id = pieces.len() as u32;
        index.insert(top.concat.clone(), new_id);
        merges.push((pieces[left as usize].clone(), pieces[right as usize].clone()));
        pieces.push(top.concat);

        let affected = pair_words.remove(&top.pair).unwrap_or_default();
        let mut touched: BTreeSet<(u32, u32)> = BTreeSet::new();
        for wi in affected {
            let word = &mut words[wi as usize];
            if !word.windows(2).any(|p| p[0] == left && p[1] == right) {
                continue;
            }
            let f = freqs[wi as usize];
            for p in word.windows(2) {
                let pair = (p[0], p[1]);
                let c = pair_counts.get_mut(&pair).expect("pair counted");
                *c -= f;
                if *c == 0 {
                    pair_counts.remove(&pair);
                }
            }
            merge_pair(word, left, right, new_id);
            for p in word.windows(2) {
                let pair = (p[0], p[1]);
                *pair_counts.entry(pair).or_insert(0) += f;
                if pair.0 == new_id || pair.1 == new_id {
                    touched.insert(pair);
                    let list = pair_words.entry(pair).or_default();
                    if list.last() != Some(&wi) {
                        list.push(wi);
                    }
                }
            }
        }
        for pair in touched {
            if let Some(&count) = pair_counts.get(&pair) {
                heap.push(candidate(pair, count, &pieces));
            }
        }
    }

    Vocab::from_parts(pieces, merges)
}

/// Trains on an iterator of texts.
pub fn train_bpe<'a, I>(texts: I, vocab_size: usize) -> Result<Vocab, BpeError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts = WordCounts::new();
    for t in texts {
        counts.add_text(t);
    }
    train_from_counts(&counts, vocab_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn micro_corpus_first_merge() {
        // alphabet {▁, a, b}
        let v = train_bpe(["aaab aab aab"], SPECIALS.len() + 3 + 1).unwrap();
        assert_eq!(v.merges(), &[("a".to_string(), "a".to_string())]);
        assert_eq!(v.len(), 9);
        assert_eq!(v.piece(8), Some("aa"));
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(train_bpe([""], 100), Err(BpeError::EmptyCorpus)));
        assert!(matches!(train_bpe(["  \n "], 100), Err(BpeError::EmptyCorpus)));
    }

    #[test]
    fn vocab_too_small() {
        let err = train_bpe(["ab"], SPECIALS.len() + 3).unwrap_err();
        assert!(matches!(err, BpeError::VocabSizeTooSmall { minimum: 9, .. }), "{err}");
    }

    #[test]
    fn stops_when_corpus_is_exhausted() {
        let v = train_bpe(["ab"], 1000).unwrap();
        // ab, ▁ab
        assert_eq!(v.len(), SPECIALS.len() + 3 + 2);
        assert_eq!(v.encode("ab"), vec![v.id("▁ab").unwrap()]);
    }

    #[test]
    fn encode_single_piece_word() {
        let v = train_bpe(["tere tere tere maailm"], 40).unwrap();
        let id = v.id("▁tere").expect("frequent word becomes a piece");
        assert_eq!(v.encode("tere"), vec![id]);
    }

    #[test]
    fn unknown_characters() {
        let v = train_bpe(["aaab aab aab"], 10).unwrap();
        let ids = v.encode("abz");
        assert!(ids.contains(&UNK_ID));
        assert!(ids.iter().all(|&i| i == UNK_ID || !Vocab::is_special(i)));
    }

    #[test]
    fn decode_roundtrip_and_errors() {
        let v = train_bpe(["tere maailm, tere!"], 30).unwrap();
        assert_eq!(v.decode(&v.encode("tere maailm")).unwrap(), "tere maailm");
        assert_eq!(v.decode(&v.encode("  tere\n\tmaailm ")).unwrap(), "tere maailm");
        assert_eq!(v.decode(&[]).unwrap(), "");
        assert!(matches!(v.decode(&[v.len() as u32]), Err(BpeError::IdOutOfRange(_))));
    }

    #[test]
    fn nfkc_applied() {
        let v = train_bpe(["fi"], 20).unwrap();
        // U+FB01 LATIN SMALL LIGATURE FI normalises to "fi"
        assert_eq!(v.encode("\u{FB01}"), v.encode("fi"));
    }

    #[test]
    fn files_roundtrip() {
        let v = train_bpe(["kass koer kass kala koer kass"], 25).unwrap();
        let dir = tempfile::tempdir().unwrap();
        v.save(dir.path()).unwrap();
        assert_eq!(Vocab::load(dir.path()).unwrap(), v);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(Vocab::parse("[PAD]\n[UNK]\n", "").is_err());
        assert!(Vocab::parse("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\na\nb\nab\n", "a c\n").is_err());
        assert!(Vocab::parse("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\na\nb\nba\n", "a b\n").is_err());
        assert!(Vocab::parse("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\na\nb\nab\n", "a b\n").is_ok());
    }

    #[test]
    fn duplicate_results_are_not_learned() {
        // "abc" is reachable as (ab, c) and (a, bc); only one merge may create it.
        let v = train_bpe(["abc abc bcx abx"], 200).unwrap();
        assert_eq!(v.merges().len(), v.len() - SPECIALS.len() - v.alphabet_len());
        let mut seen = HashSet::new();
        for (l, r) in v.merges() {
            assert!(seen.insert(format!("{l}{r}")));
        }
    }
}
