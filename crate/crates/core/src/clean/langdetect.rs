//! Character n-gram naive Bayes language identification.
//!
//! Profiles hold raw 1-3 gram counts per language (the same JSON layout as
//! the profile files of the widely used `language-detection` library:
//! `{"name": .., "freq": {ngram: count}, "n_words": [n1, n2, n3]}`).
//! Scoring multiplies, for every n-gram of the text that is known to at
//! least one language, `p(ngram | lang) + alpha / BASE_FREQ` and normalises
//! the products into a posterior over the profiled languages. Unlike the
//! sampling detector it is modelled on, every n-gram is used once and no
//! randomness is involved, so the result is a pure function of the text.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const ALPHA: f64 = 0.5;
const BASE_FREQ: f64 = 10_000.0;
const MAX_NGRAM: usize = 3;

#[derive(Debug, Error)]
pub enum LangError {
    #[error("text has no alphabetic content")]
    TextTooShort,
    #[error("no language profiles loaded")]
    NoProfiles,
    #[error("invalid profile {0}: {1}")]
    InvalidProfile(String, String),
    #[error("cannot read profiles: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub name: String,
    pub freq: BTreeMap<String, u64>,
    pub n_words: [u64; MAX_NGRAM],
}

impl LanguageProfile {
    /// Counts the 1-3 grams of `texts`.
    pub fn train<'a>(name: impl Into<String>, texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut profile = LanguageProfile {
            name: name.into(),
            freq: BTreeMap::new(),
            n_words: [0; MAX_NGRAM],
        };
        for text in texts {
            for gram in ngrams(&normalize(text)) {
                profile.n_words[gram.chars().count() - 1] += 1;
                *profile.freq.entry(gram).or_insert(0) += 1;
            }
        }
        profile
    }

    pub fn from_json(s: &str) -> Result<Self, LangError> {
        let p: LanguageProfile =
            serde_json::from_str(s).map_err(|e| LangError::InvalidProfile("<json>".into(), e.to_string()))?;
        p.check()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("profile serializes")
    }

    fn check(&self) -> Result<(), LangError> {
        let bad = |m: &str| Err(LangError::InvalidProfile(self.name.clone(), m.to_string()));
        if self.name.is_empty() {
            return bad("empty language name");
        }
        if self.n_words.contains(&0) {
            return bad("n_words must be positive for every n-gram length");
        }
        if let Some(g) = self.freq.keys().find(|g| !(1..=MAX_NGRAM).contains(&g.chars().count())) {
            return bad(&format!("n-gram {g:?} has unsupported length"));
        }
        Ok(())
    }
}

/// Compiled set of profiles ready for scoring.
#[derive(Debug, Clone)]
pub struct LanguageProfiles {
    languages: Vec<String>,
    word_lang_prob: HashMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub lang: String,
    pub probability: f64,
}

impl LanguageProfiles {
    pub fn new(profiles: Vec<LanguageProfile>) -> Result<Self, LangError> {
        if profiles.is_empty() {
            return Err(LangError::NoProfiles);
        }
        for p in &profiles {
            p.check()?;
        }
        let k = profiles.len();
        let mut word_lang_prob: HashMap<String, Vec<f64>> = HashMap::new();
        for (i, p) in profiles.iter().enumerate() {
            for (gram, &count) in &p.freq {
                let len = gram.chars().count();
                let prob = count as f64 / p.n_words[len - 1] as f64;
                word_lang_prob.entry(gram.clone()).or_insert_with(|| vec![0.0; k])[i] = prob;
            }
        }
        Ok(LanguageProfiles {
            languages: profiles.into_iter().map(|p| p.name).collect(),
            word_lang_prob,
        })
    }

    /// Profiles trained from the sample texts shipped with the crate
    /// (de, en, et, fi).
    pub fn builtin() -> &'static LanguageProfiles {
        static BUILTIN: OnceLock<LanguageProfiles> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            let samples = [
                ("de", include_str!("../../data/lang/de.txt")),
                ("en", include_str!("../../data/lang/en.txt")),
                ("et", include_str!("../../data/lang/et.txt")),
                ("fi", include_str!("../../data/lang/fi.txt")),
            ];
            let profiles = samples
                .iter()
                .map(|(name, text)| LanguageProfile::train(*name, text.lines()))
                .collect();
            LanguageProfiles::new(profiles).expect("builtin profiles are valid")
        })
    }

    /// Loads every `*.json` profile in `dir`, in file-name order.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, LangError> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut profiles = Vec::with_capacity(paths.len());
        for path in paths {
            let raw = fs::read_to_string(&path)?;
            let p = LanguageProfile::from_json(&raw)
                .map_err(|e| LangError::InvalidProfile(path.display().to_string(), e.to_string()))?;
            profiles.push(p);
        }
        LanguageProfiles::new(profiles)
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    /// Posterior over all profiled languages, in profile order.
    pub fn posterior(&self, text: &str) -> Result<Vec<f64>, LangError> {
        let normalized = normalize(text);
        if !normalized.chars().any(char::is_alphabetic) {
            return Err(LangError::TextTooShort);
        }
        let k = self.languages.len();
        let smoothing = ALPHA / BASE_FREQ;
        let mut log_prob = vec![0.0f64; k];
        for gram in ngrams(&normalized) {
            if let Some(probs) = self.word_lang_prob.get(&gram) {
                for (lp, p) in log_prob.iter_mut().zip(probs) {
                    *lp += (p + smoothing).ln();
                }
            }
        }
        let max = log_prob.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut post: Vec<f64> = log_prob.iter().map(|lp| (lp - max).exp()).collect();
        let total: f64 = post.iter().sum();
        post.iter_mut().for_each(|p| *p /= total);
        Ok(post)
    }
}

/// Returns the maximum-posterior language and its posterior probability.
/// Ties go to the language listed first.
pub fn detect_language(text: &str, profiles: &LanguageProfiles) -> Result<Detection, LangError> {
    let post = profiles.posterior(text)?;
    let (best, &probability) = post
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &f64)>, (i, p)| match acc {
            Some((_, bp)) if bp >= p => acc,
            _ => Some((i, p)),
        })
        .expect("at least one profile");
    Ok(Detection {
        lang: profiles.languages[best].clone(),
        probability,
    })
}

/// Lowercases, drops URL and e-mail tokens, and maps every non-alphabetic
/// character to a space.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for token in text.split_whitespace() {
        let lower = token.to_lowercase();
        if lower.starts_with("http://")
            || lower.starts_with("https://")
            || lower.starts_with("www.")
            || lower.contains('@')
        {
            continue;
        }
        out.push(' ');
        out.extend(lower.chars().map(|c| if c.is_alphabetic() { c } else { ' ' }));
    }
    out
}

/// 1-3 grams of every word padded with one space on each side. N-grams
/// never span a word boundary; the bare " " unigram is skipped.
fn ngrams(normalized: &str) -> impl Iterator<Item = String> + '_ {
    normalized.split_whitespace().flat_map(|word| {
        let padded: Vec<char> = std::iter::once(' ')
            .chain(word.chars())
            .chain(std::iter::once(' '))
            .collect();
        let mut grams = Vec::new();
        for n in 1..=MAX_NGRAM {
            for w in padded.windows(n) {
                if n == 1 && w[0] == ' ' {
                    continue;
                }
                grams.push(w.iter().collect::<String>());
            }
        }
        grams
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estonian_sentence() {
        let d = detect_language("Tere, kuidas sul täna läheb?", LanguageProfiles::builtin()).unwrap();
        assert_eq!(d.lang, "et");
        assert!(d.probability >= 0.95, "{d:?}");
    }

    #[test]
    fn english_sentence() {
        let d = detect_language(
            "The quick brown fox jumps over the lazy dog.",
            LanguageProfiles::builtin(),
        )
        .unwrap();
        assert_eq!(d.lang, "en");
        assert!(d.probability >= 0.95, "{d:?}");
    }

    #[test]
    fn no_letters_is_too_short() {
        let err = detect_language("12345 !!!", LanguageProfiles::builtin()).unwrap_err();
        assert!(matches!(err, LangError::TextTooShort));
        let err = detect_language("http://example.com 42", LanguageProfiles::builtin()).unwrap_err();
        assert!(matches!(err, LangError::TextTooShort));
    }

    #[test]
    fn posterior_sums_to_one() {
        let post = LanguageProfiles::builtin().posterior("Hyvää huomenta").unwrap();
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ngram_windows() {
        let grams: Vec<String> = ngrams(" ab").collect();
        assert_eq!(grams, ["a", "b", " a", "ab", "b ", " ab", "ab "]);
    }

    #[test]
    fn profile_json_roundtrip() {
        let p = LanguageProfile::train("xx", ["aab ba"]);
        assert_eq!(LanguageProfile::from_json(&p.to_json()).unwrap(), p);
        assert!(LanguageProfile::from_json(r#"{"name":"x","freq":{},"n_words":[0,1,1]}"#).is_err());
    }

    #[test]
    fn empty_profile_set_rejected() {
        assert!(matches!(LanguageProfiles::new(vec![]), Err(LangError::NoProfiles)));
    }
}
