//! Corpus cleaning stages.
//!
//! Every stage except deduplication is a pure per-document function and can
//! run in parallel. Deduplication owns a seen-digest set and must observe
//! documents in input order.

use std::fmt;

use serde_json::{json, Value};
use thiserror::Error;

use crate::ingest::Document;

mod dedup;
mod heuristics;
mod langdetect;
mod markup;
mod truecase;

pub use dedup::{dedup, dedup_key, normalize_for_dedup, DedupKey, Deduplicator};
pub use heuristics::{heuristic_filter, FilterThresholds, StopwordList, TextMeasures};
pub use langdetect::{detect_language, Detection, LangError, LanguageProfile, LanguageProfiles};
pub use markup::strip_markup;
pub use truecase::{build_casing_lexicon, truecase, truecase_text, CasingEntry, CasingLexicon, LexiconBuilder};

#[derive(Debug, Error)]
pub enum CleanError {
    #[error("document {0} has no (or misaligned) lemma annotations")]
    MissingLemmas(String),
    #[error("invalid casing lexicon: {0}")]
    InvalidLexicon(String),
    #[error("cannot load {0}: {1}")]
    Resource(String, String),
    #[error(transparent)]
    Lang(#[from] LangError),
}

/// Why a document was removed, with the measured value that triggered it.
#[derive(Debug, Clone, PartialEq)]
pub enum DropReason {
    /// Language tag or detected language differs from the target. Carries
    /// the offending language and the detector probability (1.0 for tags,
    /// 0.0 when the text has no letters to detect on).
    NonTargetLanguage { lang: String, probability: f64 },
    /// Carries the dedup digest shared with an earlier document.
    Duplicate(DedupKey),
    TooFewWords(usize),
    TooManyStopwords(f64),
    TooMuchPunctuation(f64),
}

impl DropReason {
    pub fn kind(&self) -> &'static str {
        match self {
            DropReason::NonTargetLanguage { .. } => "NonTargetLanguage",
            DropReason::Duplicate(_) => "Duplicate",
            DropReason::TooFewWords(_) => "TooFewWords",
            DropReason::TooManyStopwords(_) => "TooManyStopwords",
            DropReason::TooMuchPunctuation(_) => "TooMuchPunctuation",
        }
    }

    pub fn detail(&self) -> Value {
        match self {
            DropReason::NonTargetLanguage { lang, probability } => {
                json!({ "lang": lang, "probability": round6(*probability) })
            }
            DropReason::Duplicate(key) => json!(key.to_string()),
            DropReason::TooFewWords(n) => json!(n),
            DropReason::TooManyStopwords(r) | DropReason::TooMuchPunctuation(r) => json!(round6(*r)),
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind(), self.detail())
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// One line of the drop report.
#[derive(Debug, Clone, PartialEq)]
pub struct DropRecord {
    pub id: String,
    pub stage: String,
    pub reason: DropReason,
}

impl DropRecord {
    pub fn to_json(&self) -> Value {
        json!({
            "id": self.id,
            "stage": self.stage,
            "reason": self.reason.kind(),
            "detail": self.reason.detail(),
        })
    }
}

/// Two-step language filter: a document whose corpus tag names another
/// language is dropped outright; every remaining document must then be
/// detected as the target language with at least `min_probability`.
#[derive(Debug, Clone)]
pub struct LanguageFilter<'p> {
    pub target: String,
    pub min_probability: f64,
    pub profiles: &'p LanguageProfiles,
}

impl<'p> LanguageFilter<'p> {
    pub fn new(target: impl Into<String>, min_probability: f64, profiles: &'p LanguageProfiles) -> Self {
        LanguageFilter {
            target: target.into(),
            min_probability,
            profiles,
        }
    }

    pub fn check(&self, doc: &Document) -> Result<(), DropReason> {
        if let Some(tag) = &doc.lang_tag {
            if *tag != self.target {
                return Err(DropReason::NonTargetLanguage {
                    lang: tag.clone(),
                    probability: 1.0,
                });
            }
        }
        match detect_language(&doc.text, self.profiles) {
            Ok(d) if d.lang == self.target && d.probability >= self.min_probability => Ok(()),
            Ok(d) => Err(DropReason::NonTargetLanguage {
                lang: d.lang,
                probability: d.probability,
            }),
            Err(_) => Err(DropReason::NonTargetLanguage {
                lang: "und".into(),
                probability: 0.0,
            }),
        }
    }
}

/// Strips markup from a document. Lemmas survive only if the token count is
/// unchanged; otherwise they no longer align and are cleared.
pub fn strip_document(doc: &Document) -> Document {
    let text = strip_markup(&doc.text);
    let lemmas = match &doc.lemmas {
        Some(l) if text.split_whitespace().count() == l.len() => Some(l.clone()),
        _ => None,
    };
    Document {
        text,
        lemmas,
        ..doc.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn language_filter_two_steps() {
        let f = LanguageFilter::new("et", 0.95, LanguageProfiles::builtin());
        let et = "Tere, kuidas sul täna läheb? Ema tegi sooja suppi.";
        assert_eq!(f.check(&Document::new("a", et)), Ok(()));
        assert_eq!(f.check(&Document::new("a", et).with_lang("et")), Ok(()));
        // tag wins over content
        let r = f.check(&Document::new("a", et).with_lang("ru")).unwrap_err();
        assert_eq!(r.kind(), "NonTargetLanguage");
        let r = f.check(&Document::new("b", "The weather is fine today, thank you.")).unwrap_err();
        assert!(matches!(r, DropReason::NonTargetLanguage { ref lang, .. } if lang == "en"), "{r}");
        let r = f.check(&Document::new("c", "1234 !!")).unwrap_err();
        assert!(matches!(r, DropReason::NonTargetLanguage { probability, .. } if probability == 0.0));
    }

    #[test]
    fn strip_keeps_aligned_lemmas() {
        let d = Document::new("a", "<b>Tere</b> maailm").with_lemmas(["tere", "maailm"]);
        assert_eq!(strip_document(&d).lemmas, d.lemmas);
        let d = Document::new("a", "Tere <br> maailm").with_lemmas(["tere", "<br>", "maailm"]);
        assert_eq!(strip_document(&d).lemmas, None);
    }

    #[test]
    fn drop_record_json() {
        let r = DropRecord {
            id: "d1".into(),
            stage: "heuristics".into(),
            reason: DropReason::TooFewWords(3),
        };
        assert_eq!(
            r.to_json().to_string(),
            r#"{"detail":3,"id":"d1","reason":"TooFewWords","stage":"heuristics"}"#
        );
    }
}
