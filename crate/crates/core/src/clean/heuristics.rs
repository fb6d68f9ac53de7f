//! Word-count, stopword-ratio and punctuation-ratio document filters.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::text::{is_punct, split_punct};

use super::{CleanError, DropReason};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterThresholds {
    pub min_words: usize,
    pub max_stopword_ratio: f64,
    pub max_punct_ratio: f64,
    pub lang_confidence_min: f64,
    pub stopwords: StopwordList,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            min_words: 10,
            max_stopword_ratio: 0.6,
            max_punct_ratio: 0.3,
            lang_confidence_min: 0.95,
            stopwords: StopwordList::default(),
        }
    }
}

impl FilterThresholds {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_words < 1 {
            return Err("min_words must be at least 1".into());
        }
        for (name, v) in [
            ("max_stopword_ratio", self.max_stopword_ratio),
            ("max_punct_ratio", self.max_punct_ratio),
            ("lang_confidence_min", self.lang_confidence_min),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

/// Lowercase word forms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopwordList(HashSet<String>);

impl StopwordList {
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        StopwordList(words.into_iter().map(|w| w.as_ref().to_lowercase()).collect())
    }

    /// One form per line; blank lines and lines starting with `#` are ignored.
    pub fn parse(src: &str) -> Self {
        StopwordList::new(
            src.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CleanError> {
        let path = path.as_ref();
        let src = fs::read_to_string(path).map_err(|e| CleanError::Resource(path.display().to_string(), e.to_string()))?;
        Ok(StopwordList::parse(&src))
    }

    /// The small Estonian list shipped with the crate.
    pub fn estonian() -> Self {
        StopwordList::parse(include_str!("../../data/stopwords-et.txt"))
    }

    pub fn contains(&self, lowercase_word: &str) -> bool {
        self.0.contains(lowercase_word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Measured document properties the filter looks at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextMeasures {
    pub words: usize,
    pub stopwords: usize,
    pub punct_chars: usize,
    pub non_space_chars: usize,
}

impl TextMeasures {
    pub fn of(text: &str, stopwords: &StopwordList) -> Self {
        let mut m = TextMeasures {
            words: 0,
            stopwords: 0,
            punct_chars: 0,
            non_space_chars: 0,
        };
        for token in text.split_whitespace() {
            m.words += 1;
            let (_, core, _) = split_punct(token);
            if !core.is_empty() && stopwords.contains(&core.to_lowercase()) {
                m.stopwords += 1;
            }
            for c in token.chars() {
                m.non_space_chars += 1;
                m.punct_chars += usize::from(is_punct(c));
            }
        }
        m
    }

    pub fn stopword_ratio(&self) -> f64 {
        if self.words == 0 {
            0.0
        } else {
            self.stopwords as f64 / self.words as f64
        }
    }

    pub fn punct_ratio(&self) -> f64 {
        if self.non_space_chars == 0 {
            0.0
        } else {
            self.punct_chars as f64 / self.non_space_chars as f64
        }
    }
}

/// Applies the checks in order (word count, stopword ratio, punctuation
/// ratio) and reports the first failure.
pub fn heuristic_filter(text: &str, thresholds: &FilterThresholds) -> Result<(), DropReason> {
    let m = TextMeasures::of(text, &thresholds.stopwords);
    if m.words < thresholds.min_words {
        return Err(DropReason::TooFewWords(m.words));
    }
    let stop = m.stopword_ratio();
    if stop > thresholds.max_stopword_ratio {
        return Err(DropReason::TooManyStopwords(stop));
    }
    let punct = m.punct_ratio();
    if punct > thresholds.max_punct_ratio {
        return Err(DropReason::TooMuchPunctuation(punct));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thresholds(min_words: usize, stop: f64, punct: f64, stopwords: &[&str]) -> FilterThresholds {
        FilterThresholds {
            min_words,
            max_stopword_ratio: stop,
            max_punct_ratio: punct,
            stopwords: StopwordList::new(stopwords.iter().copied()),
            ..Default::default()
        }
    }

    #[test]
    fn too_few_words() {
        let t = thresholds(10, 0.6, 0.3, &[]);
        assert_eq!(heuristic_filter("üks kaks kolm", &t), Err(DropReason::TooFewWords(3)));
        assert_eq!(heuristic_filter("", &t), Err(DropReason::TooFewWords(0)));
    }

    #[test]
    fn too_many_stopwords() {
        let t = thresholds(1, 0.6, 0.3, &["ja"]);
        let verdict = heuristic_filter("ja ja ja ja ja ja ja ja ja muu", &t);
        match verdict {
            Err(DropReason::TooManyStopwords(r)) => assert!((r - 0.9).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stopwords_match_through_punctuation_and_case() {
        let list = StopwordList::new(["ja"]);
        let m = TextMeasures::of("Ja, ja! jah", &list);
        assert_eq!(m.stopwords, 2);
    }

    #[test]
    fn too_much_punctuation() {
        let t = thresholds(1, 1.0, 0.3, &[]);
        // 6 punctuation characters out of 10 non-space characters
        match heuristic_filter("a!!! b??? c d", &t) {
            Err(DropReason::TooMuchPunctuation(r)) => assert!((r - 0.6).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn order_of_checks() {
        // fails all three; the word count is reported
        let t = thresholds(5, 0.1, 0.1, &["ja"]);
        assert_eq!(heuristic_filter("ja !!!", &t), Err(DropReason::TooFewWords(2)));
    }

    #[test]
    fn clean_prose_kept() {
        let text = "Eesti on riik Põhja-Euroopas Läänemere idakaldal. Eesti piirneb põhjas Soome lahega, \
                    läänes Läänemerega, lõunas Lätiga ja idas Venemaaga. Pealinn on Tallinn, mis asub \
                    Põhja-Eesti rannikul. Teised suuremad linnad on Tartu, Narva, Pärnu ja Kohtla-Järve. \
                    Eesti keel kuulub soome-ugri keelte hulka ning on lähedases suguluses soome keelega. \
                    Ilm on väga muutlik.";
        assert_eq!(text.split_whitespace().count(), 50);
        let t = FilterThresholds {
            stopwords: StopwordList::estonian(),
            ..Default::default()
        };
        assert_eq!(heuristic_filter(text, &t), Ok(()));
    }

    #[test]
    fn stopword_file_comments() {
        let list = StopwordList::parse("# comment\nja\n\n  ning \nJA\n");
        assert_eq!(list.len(), 2);
        assert!(list.contains("ning"));
    }

    #[test]
    fn threshold_validation() {
        assert!(FilterThresholds::default().validate().is_ok());
        let bad = FilterThresholds { min_words: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = FilterThresholds { max_punct_ratio: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
