//! Lemma-driven truecasing.
//!
//! A lexicon maps each lowercase word form to its canonical casing. The
//! casing of a form is decided by the first character of its lemma: an
//! uppercase lemma means the form is a proper-noun form and is written
//! capitalised, anything else means lowercase. Votes from every occurrence
//! are pooled; the majority wins and a tie goes to lowercase.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::ingest::Document;
use crate::text::split_punct;

use super::CleanError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CasingEntry {
    pub surface: String,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CasingLexicon {
    entries: BTreeMap<String, CasingEntry>,
}

impl CasingLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, surface: &str, count: u64) -> Result<(), CleanError> {
        let key = surface.to_lowercase();
        if key.is_empty() {
            return Err(CleanError::InvalidLexicon("empty surface form".into()));
        }
        self.entries.insert(
            key,
            CasingEntry {
                surface: surface.to_string(),
                count,
            },
        );
        Ok(())
    }

    pub fn get(&self, lowercase: &str) -> Option<&CasingEntry> {
        self.entries.get(lowercase)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &CasingEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// TSV: `lowercase<TAB>surface<TAB>count`.
    pub fn parse_tsv(src: &str) -> Result<Self, CleanError> {
        let mut lex = CasingLexicon::new();
        for (i, line) in src.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| CleanError::InvalidLexicon(format!("line {}: {m}", i + 1));
            let cols: Vec<&str> = line.split('\t').collect();
            let [key, surface, count] = cols[..] else {
                return Err(bad("expected 3 tab-separated columns"));
            };
            let count: u64 = count.trim().parse().map_err(|_| bad("count is not an integer"))?;
            if surface.to_lowercase() != key {
                return Err(bad("key is not the lowercase of the surface form"));
            }
            lex.insert(surface, count)?;
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CleanError> {
        let path = path.as_ref();
        let src = fs::read_to_string(path).map_err(|e| CleanError::Resource(path.display().to_string(), e.to_string()))?;
        CasingLexicon::parse_tsv(&src)
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (key, e) in &self.entries {
            writeln!(out, "{key}\t{}\t{}", e.surface, e.count)?;
        }
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Votes {
    capitalized: u64,
    lowercase: u64,
}

/// Accumulates casing votes document by document.
#[derive(Debug, Default)]
pub struct LexiconBuilder {
    votes: BTreeMap<String, Votes>,
}

impl LexiconBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_document(&mut self, doc: &Document) -> Result<(), CleanError> {
        let lemmas = doc
            .lemmas
            .as_ref()
            .ok_or_else(|| CleanError::MissingLemmas(doc.id.clone()))?;
        let tokens: Vec<&str> = doc.words().collect();
        if tokens.len() != lemmas.len() {
            return Err(CleanError::MissingLemmas(doc.id.clone()));
        }
        for (token, lemma) in tokens.into_iter().zip(lemmas) {
            self.add_token(token, lemma);
        }
        Ok(())
    }

    pub fn add_token(&mut self, token: &str, lemma: &str) {
        let (_, core, _) = split_punct(token);
        if !core.chars().any(char::is_alphabetic) || has_internal_capital(core) {
            return;
        }
        let (_, lemma_core, _) = split_punct(lemma);
        let capital = lemma_core.chars().next().is_some_and(char::is_uppercase);
        let v = self.votes.entry(core.to_lowercase()).or_default();
        if capital {
            v.capitalized += 1;
        } else {
            v.lowercase += 1;
        }
    }

    pub fn merge(&mut self, other: LexiconBuilder) {
        for (k, v) in other.votes {
            let e = self.votes.entry(k).or_default();
            e.capitalized += v.capitalized;
            e.lowercase += v.lowercase;
        }
    }

    pub fn finish(self) -> CasingLexicon {
        let mut lex = CasingLexicon::new();
        for (key, v) in self.votes {
            let (surface, count) = if v.capitalized > v.lowercase {
                (capitalize(&key), v.capitalized)
            } else {
                (key.clone(), v.lowercase)
            };
            lex.entries.insert(key, CasingEntry { surface, count });
        }
        lex
    }
}

/// Builds a lexicon from lemma-annotated documents.
pub fn build_casing_lexicon<'a, I>(docs: I) -> Result<CasingLexicon, CleanError>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut b = LexiconBuilder::new();
    for d in docs {
        b.add_document(d)?;
    }
    Ok(b.finish())
}

fn capitalize(lower: &str) -> String {
    let mut chars = lower.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// An uppercase character anywhere after the first one ("IBM", "McDonald").
fn has_internal_capital(word: &str) -> bool {
    word.chars().skip(1).any(char::is_uppercase)
}

/// Rewrites every in-lexicon token to its canonical casing. Whitespace and
/// punctuation around tokens are preserved exactly.
pub fn truecase_text(text: &str, lexicon: &CasingLexicon) -> String {
    if lexicon.is_empty() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while !rest.is_empty() {
        let ws = rest.find(|c: char| !c.is_whitespace()).unwrap_or(rest.len());
        out.push_str(&rest[..ws]);
        rest = &rest[ws..];
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let token = &rest[..end];
        rest = &rest[end..];

        let (lead, core, trail) = split_punct(token);
        let replacement = (!core.is_empty() && !has_internal_capital(core))
            .then(|| lexicon.get(&core.to_lowercase()))
            .flatten();
        match replacement {
            Some(entry) => {
                out.push_str(lead);
                out.push_str(&entry.surface);
                out.push_str(trail);
            }
            None => out.push_str(token),
        }
    }
    out
}

pub fn truecase(doc: &Document, lexicon: &CasingLexicon) -> Document {
    Document {
        text: truecase_text(&doc.text, lexicon),
        ..doc.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex(entries: &[&str]) -> CasingLexicon {
        let mut l = CasingLexicon::new();
        for e in entries {
            l.insert(e, 1).unwrap();
        }
        l
    }

    #[test]
    fn lexicon_from_lemmas() {
        let doc = Document::new("a", "Eesti Täna").with_lemmas(["Eesti", "täna"]);
        let l = build_casing_lexicon([&doc]).unwrap();
        assert_eq!(l.get("eesti").unwrap().surface, "Eesti");
        assert_eq!(l.get("täna").unwrap().surface, "täna");
        assert_eq!(l.len(), 2);
    }

    #[test]
    fn majority_and_ties() {
        let mut b = LexiconBuilder::new();
        for _ in 0..3 {
            b.add_token("eesti", "Eesti");
        }
        b.add_token("eesti", "eesti");
        b.add_token("Tee", "Tee");
        b.add_token("tee", "tee");
        let l = b.finish();
        assert_eq!(l.get("eesti").unwrap(), &CasingEntry { surface: "Eesti".into(), count: 3 });
        assert_eq!(l.get("tee").unwrap().surface, "tee");
    }

    #[test]
    fn missing_lemmas() {
        let doc = Document::new("x", "Tere");
        assert!(matches!(build_casing_lexicon([&doc]), Err(CleanError::MissingLemmas(id)) if id == "x"));
    }

    #[test]
    fn sentence_initial_lowering() {
        assert_eq!(truecase_text("Täna sajab.", &lex(&["täna"])), "täna sajab.");
    }

    #[test]
    fn proper_noun_raising() {
        assert_eq!(truecase_text("ta elab eestis", &lex(&["Eestis"])), "ta elab Eestis");
        assert_eq!(truecase_text("(eestis), \"eestis\"", &lex(&["Eestis"])), "(Eestis), \"Eestis\"");
    }

    #[test]
    fn internal_capitals_untouched() {
        let l = lex(&["ibm", "mcdonald"]);
        assert_eq!(truecase_text("IBM ja McDonald", &l), "IBM ja McDonald");
    }

    #[test]
    fn empty_lexicon_identity() {
        let s = "  Täna\tSAJAB  vihma.\n";
        assert_eq!(truecase_text(s, &CasingLexicon::new()), s);
    }

    #[test]
    fn tsv_roundtrip_and_validation() {
        let l = lex(&["Eesti", "täna"]);
        let mut buf = Vec::new();
        l.write_tsv(&mut buf).unwrap();
        assert_eq!(CasingLexicon::parse_tsv(std::str::from_utf8(&buf).unwrap()).unwrap(), l);
        assert!(CasingLexicon::parse_tsv("eesti\tTallinn\t1\n").is_err());
        assert!(CasingLexicon::parse_tsv("eesti\tEesti\n").is_err());
    }

    proptest! {
        #[test]
        fn idempotent(words in proptest::collection::vec("[a-cA-C]{1,3}[.,]?", 0..12)) {
            let l = lex(&["Ab", "b", "Ca", "ac"]);
            let text = words.join(" ");
            let once = truecase_text(&text, &l);
            prop_assert_eq!(truecase_text(&once, &l), once);
        }
    }
}
