//! Exact deduplication on a hash of the lowercased document text.

use std::collections::HashSet;
use std::fmt;

use xxhash_rust::xxh3::xxh3_128;

use crate::ingest::Document;

/// 128-bit XXH3 digest of the normalized document text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DedupKey(pub u128);

impl fmt::Display for DedupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

/// Unicode lowercase, whitespace runs collapsed to one space, trimmed.
pub fn normalize_for_dedup(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for word in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

pub fn dedup_key(text: &str) -> DedupKey {
    DedupKey(xxh3_128(normalize_for_dedup(text).as_bytes()))
}

/// The seen-digest set. `insert` is the single membership point; callers
/// that hash in parallel must still call it in input order.
#[derive(Debug, Default)]
pub struct Deduplicator {
    seen: HashSet<DedupKey>,
}

impl Deduplicator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns true when `key` was not seen before (the document is kept).
    pub fn insert(&mut self, key: DedupKey) -> bool {
        self.seen.insert(key)
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// Keeps the first occurrence of every digest, in input order.
pub fn dedup<I>(docs: I) -> (Vec<Document>, usize)
where
    I: IntoIterator<Item = Document>,
{
    let mut seen = Deduplicator::new();
    let mut dropped = 0;
    let kept = docs
        .into_iter()
        .filter(|d| {
            let fresh = seen.insert(dedup_key(&d.text));
            dropped += usize::from(!fresh);
            fresh
        })
        .collect();
    (kept, dropped)
}
