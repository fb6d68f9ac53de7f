//! Pipeline configuration: an INI-like file of `[section]` headers and
//! `key = value` lines. Full-line comments start with `#` or `;`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::clean::FilterThresholds;
use crate::ingest::Format;
use crate::pretrain::GenerationConfig;

/// Sections and their keys, in canonical order.
pub const SCHEMA: &[(&str, &[&str])] = &[
    ("input", &["paths", "format"]),
    ("stages", &["strip", "langfilter", "dedup", "heuristics", "truecase", "vocab", "examples"]),
    (
        "filter",
        &[
            "target_lang",
            "min_words",
            "max_stopword_ratio",
            "max_punct_ratio",
            "lang_confidence_min",
            "stopwords",
            "lang_profiles",
        ],
    ),
    ("truecase", &["lexicon"]),
    ("vocab", &["vocab_size", "path"]),
    (
        "examples",
        &[
            "max_seq_length",
            "masked_lm_prob",
            "random_next_prob",
            "short_seq_prob",
            "dupe_factor",
            "shards",
            "seed",
        ],
    ),
    ("output", &["dir", "report"]),
];

/// One configuration problem, anchored to a line of the file when it came
/// from one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    fn at(line: Option<usize>, message: impl Into<String>) -> Self {
        Diagnostic {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Stages run in this fixed order; disabled ones are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageToggles {
    pub strip: bool,
    pub langfilter: bool,
    pub dedup: bool,
    pub heuristics: bool,
    pub truecase: bool,
    pub vocab: bool,
    pub examples: bool,
}

impl StageToggles {
    pub const ALL_ON: StageToggles = StageToggles {
        strip: true,
        langfilter: true,
        dedup: true,
        heuristics: true,
        truecase: true,
        vocab: true,
        examples: true,
    };

    pub const ALL_OFF: StageToggles = StageToggles {
        strip: false,
        langfilter: false,
        dedup: false,
        heuristics: false,
        truecase: false,
        vocab: false,
        examples: false,
    };
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles::ALL_ON
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    /// Inferred from the first input's extension when unset.
    pub format: Option<Format>,
    pub stages: StageToggles,
    pub target_lang: String,
    /// The stopword list inside is replaced by `stopwords_path` when set.
    pub thresholds: FilterThresholds,
    pub stopwords_path: Option<PathBuf>,
    pub lang_profiles: Option<PathBuf>,
    pub lexicon_path: Option<PathBuf>,
    pub vocab_size: usize,
    /// Existing vocabulary directory, used when the vocab stage is off.
    pub vocab_path: Option<PathBuf>,
    pub generation: GenerationConfig,
    pub output_dir: PathBuf,
    /// Defaults to `report.jsonl` in the output directory.
    pub report_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: Vec::new(),
            format: None,
            stages: StageToggles::default(),
            target_lang: "et".into(),
            thresholds: FilterThresholds::default(),
            stopwords_path: None,
            lang_profiles: None,
            lexicon_path: None,
            vocab_size: 50_000,
            vocab_path: None,
            generation: GenerationConfig::default(),
            output_dir: PathBuf::from("out"),
            report_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn input_format(&self) -> Option<Format> {
        self.format.or_else(|| self.inputs.first().and_then(|p| infer_format(p)))
    }

    pub fn report_path(&self) -> PathBuf {
        self.report_path
            .clone()
            .unwrap_or_else(|| self.output_dir.join("report.jsonl"))
    }

    /// Sets one `section.key` from its textual value.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match (section, key) {
            ("input", "paths") => {
                self.inputs = split_list(v).map(PathBuf::from).collect();
            }
            ("input", "format") => self.format = Some(v.parse()?),
            ("stages", stage) => {
                let on = parse_bool(v)?;
                let s = &mut self.stages;
                let slot = match stage {
                    "strip" => &mut s.strip,
                    "langfilter" => &mut s.langfilter,
                    "dedup" => &mut s.dedup,
                    "heuristics" => &mut s.heuristics,
                    "truecase" => &mut s.truecase,
                    "vocab" => &mut s.vocab,
                    "examples" => &mut s.examples,
                    _ => return Err(unknown(section, key)),
                };
                *slot = on;
            }
            ("filter", "target_lang") => self.target_lang = nonempty(v)?.to_string(),
            ("filter", "min_words") => self.thresholds.min_words = parse_count(v)?,
            ("filter", "max_stopword_ratio") => self.thresholds.max_stopword_ratio = parse_float(v)?,
            ("filter", "max_punct_ratio") => self.thresholds.max_punct_ratio = parse_float(v)?,
            ("filter", "lang_confidence_min") => self.thresholds.lang_confidence_min = parse_float(v)?,
            ("filter", "stopwords") => self.stopwords_path = Some(parse_path(v)?),
            ("filter", "lang_profiles") => self.lang_profiles = Some(parse_path(v)?),
            ("truecase", "lexicon") => self.lexicon_path = Some(parse_path(v)?),
            ("vocab", "vocab_size") => self.vocab_size = parse_count(v)?,
            ("vocab", "path") => self.vocab_path = Some(parse_path(v)?),
            ("examples", "max_seq_length") => self.generation.max_seq_length = parse_count(v)?,
            ("examples", "masked_lm_prob") => self.generation.masked_lm_prob = parse_float(v)?,
            ("examples", "random_next_prob") => self.generation.random_next_prob = parse_float(v)?,
            ("examples", "short_seq_prob") => self.generation.short_seq_prob = parse_float(v)?,
            ("examples", "dupe_factor") => self.generation.dupe_factor = parse_count(v)?,
            ("examples", "shards") => self.generation.shards = parse_count(v)?,
            ("examples", "seed") => self.generation.seed = v.parse().map_err(|_| format!("expected an unsigned integer, got {v:?}"))?,
            ("output", "dir") => self.output_dir = parse_path(v)?,
            ("output", "report") => self.report_path = Some(parse_path(v)?),
            _ => return Err(unknown(section, key)),
        }
        Ok(())
    }

    /// Applies `section.key=value`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), Diagnostic> {
        let fail = |m: String| Diagnostic::at(None, format!("--set {assignment}: {m}"));
        let (lhs, value) = assignment
            .split_once('=')
            .ok_or_else(|| fail("expected section.key=value".into()))?;
        let (section, key) = lhs
            .trim()
            .split_once('.')
            .ok_or_else(|| fail("expected section.key=value".into()))?;
        check_key(section, key).map_err(fail)?;
        self.set(section, key, value).map_err(fail)
    }

    /// Cross-field checks; every problem is reported.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut err = |m: String| out.push(Diagnostic::at(None, m));
        if self.inputs.is_empty() {
            err("input.paths: at least one input path is required".into());
        }
        if self.inputs.iter().any(|p| p.as_os_str().is_empty()) {
            err("input.paths: empty path".into());
        }
        if !self.inputs.is_empty() && self.input_format().is_none() {
            err(format!(
                "input.format: cannot infer the format of {}; set one of {}",
                self.inputs[0].display(),
                Format::ALL.map(Format::name).join(", ")
            ));
        }
        if let Err(m) = self.thresholds.validate() {
            err(format!("filter: {m}"));
        }
        if self.stages.vocab && self.vocab_size < 1 {
            err("vocab.vocab_size must be positive".into());
        }
        if self.stages.examples {
            if let Err(e) = self.generation.validate() {
                err(format!("examples: {e}"));
            }
            if !self.stages.vocab && self.vocab_path.is_none() {
                err("stages.examples needs the vocab stage or vocab.path".into());
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            err("output.dir: empty path".into());
        }
        out
    }
}

/// Parses a configuration file body. Unknown sections and keys, duplicate
/// keys and bad values are all reported together.
pub fn parse_config(src: &str) -> Result<PipelineConfig, Vec<Diagnostic>> {
    let mut config = PipelineConfig::default();
    let mut diags = Vec::new();
    let mut section: Option<String> = None;
    let mut seen: Vec<(String, String)> = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line = Some(i + 1);
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') || text.starts_with(';') {
            continue;
        }
        if let Some(rest) = text.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                diags.push(Diagnostic::at(line, format!("unterminated section header {text:?}")));
                section = None;
                continue;
            };
            let name = name.trim();
            if SCHEMA.iter().any(|(s, _)| *s == name) {
                section = Some(name.to_string());
            } else {
                let names: Vec<&str> = SCHEMA.iter().map(|(s, _)| *s).collect();
                diags.push(Diagnostic::at(line, format!("unknown section [{name}]{}", hint(name, &names))));
                section = None;
            }
            continue;
        }
        let Some((key, value)) = text.split_once('=') else {
            diags.push(Diagnostic::at(line, format!("expected `key = value`, found {text:?}")));
            continue;
        };
        let key = key.trim();
        let Some(sec) = &section else {
            diags.push(Diagnostic::at(line, format!("key {key:?} outside a known section")));
            continue;
        };
        if let Err(m) = check_key(sec, key) {
            diags.push(Diagnostic::at(line, m));
            continue;
        }
        if seen.iter().any(|(s, k)| s == sec && k == key) {
            diags.push(Diagnostic::at(line, format!("duplicate key {sec}.{key}")));
            continue;
        }
        seen.push((sec.clone(), key.to_string()));
        if let Err(m) = config.set(sec, key, value) {
            diags.push(Diagnostic::at(line, format!("{sec}.{key}: {m}")));
        }
    }
    if diags.is_empty() {
        Ok(config)
    } else {
        Err(diags)
    }
}

/// Reads, parses and validates a configuration file.
pub fn validate_config(path: impl AsRef<Path>) -> Result<PipelineConfig, Vec<Diagnostic>> {
    let path = path.as_ref();
    let src = fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::at(None, format!("cannot read {}: {e}", path.display()))])?;
    let config = parse_config(&src)?;
    let diags = config.validate();
    if diags.is_empty() {
        Ok(config)
    } else {
        Err(diags)
    }
}

pub fn infer_format(path: &Path) -> Option<Format> {
    match path.extension()?.to_str()? {
        "vert" | "xml" => Some(Format::VertXml),
        "txt" => Some(Format::BlanklineText),
        "jsonl" | "json" => Some(Format::JsonLines),
        _ => None,
    }
}

fn check_key(section: &str, key: &str) -> Result<(), String> {
    let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| *s == section) else {
        let names: Vec<&str> = SCHEMA.iter().map(|(s, _)| *s).collect();
        return Err(format!("unknown section [{section}]{}", hint(section, &names)));
    };
    if keys.contains(&key) {
        return Ok(());
    }
    // prefer a key of this section, then any section
    let local = best_match(key, keys.iter().copied());
    let suggestion = match local {
        Some(k) => format!("; did you mean {k:?}?"),
        None => match SCHEMA
            .iter()
            .flat_map(|(s, ks)| ks.iter().map(move |k| (*s, *k)))
            .filter_map(|(s, k)| best_match(key, [k]).map(|k| (s, k)))
            .next()
        {
            Some((s, k)) => format!("; did you mean {k:?} in [{s}]?"),
            None => String::new(),
        },
    };
    Err(unknown(section, key) + &suggestion)
}

fn unknown(section: &str, key: &str) -> String {
    format!("unknown key {key:?} in [{section}]")
}

fn hint(name: &str, candidates: &[&str]) -> String {
    best_match(name, candidates.iter().copied())
        .map(|c| format!("; did you mean [{c}]?"))
        .unwrap_or_default()
}

/// Closest candidate by Jaro-Winkler similarity with underscores ignored.
fn best_match<'a>(input: &str, candidates: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    let squash = |s: &str| s.replace('_', "").to_lowercase();
    let needle = squash(input);
    candidates
        .into_iter()
        .map(|c| (strsim::jaro_winkler(&needle, &squash(c)), c))
        .filter(|(score, _)| *score >= 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn nonempty(v: &str) -> Result<&str, String> {
    if v.is_empty() {
        Err("value must not be empty".into())
    } else {
        Ok(v)
    }
}

fn parse_path(v: &str) -> Result<PathBuf, String> {
    nonempty(v).map(PathBuf::from)
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn parse_count(v: &str) -> Result<usize, String> {
    v.parse()
        .map_err(|_| format!("expected a non-negative integer, got {v:?}"))
}

fn parse_float(v: &str) -> Result<f64, String> {
    v.parse::<f64>()
        .ok()
        .filter(|f| f.is_finite())
        .ok_or_else(|| format!("expected a number, got {v:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse_config("[input]\npaths = corpus.jsonl\n").unwrap();
        assert!(c.validate().is_empty());
        assert_eq!(c.vocab_size, 50_000);
        assert_eq!(c.generation.shards, 4);
        assert_eq!(c.generation.masked_lm_prob, 0.15);
        assert_eq!(c.input_format(), Some(Format::JsonLines));
        assert_eq!(c.report_path(), PathBuf::from("out/report.jsonl"));
    }

    #[test]
    fn negative_min_words() {
        let diags = parse_config("[input]\npaths = a.txt\n\n[filter]\nmin_words = -3\n").unwrap_err();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].line, Some(5));
        assert!(diags[0].message.contains("min_words"), "{}", diags[0]);
    }

    #[test]
    fn zero_min_words_fails_validation() {
        let c = parse_config("[input]\npaths = a.txt\n[filter]\nmin_words = 0\n").unwrap();
        assert!(c.validate().iter().any(|d| d.message.contains("min_words")));
    }

    #[test]
    fn unknown_key_suggestion() {
        let diags = parse_config("[examples]\nmaxseq = 128\n").unwrap_err();
        assert_eq!(diags[0].line, Some(2));
        assert!(diags[0].message.contains("\"max_seq_length\""), "{}", diags[0]);
        let diags = parse_config("[output]\nmaxseq = 128\n").unwrap_err();
        assert!(diags[0].message.contains("in [examples]"), "{}", diags[0]);
        let diags = parse_config("[examples]\nzzz = 1\n").unwrap_err();
        assert!(!diags[0].message.contains("did you mean"));
    }

    #[test]
    fn all_problems_reported() {
        let src = "stray = 1\n[nope]\n[stages]\nstrip = maybe\nstrip = true\nstrip = false\n[vocab\n";
        let diags = parse_config(src).unwrap_err();
        let lines: Vec<_> = diags.iter().map(|d| d.line.unwrap()).collect();
        assert_eq!(lines, vec![1, 2, 4, 5, 6, 7]);
    }

    #[test]
    fn overrides() {
        let mut c = PipelineConfig::default();
        c.apply_override("examples.seed=7").unwrap();
        c.apply_override("stages.truecase = off").unwrap();
        assert_eq!(c.generation.seed, 7);
        assert!(!c.stages.truecase);
        assert!(c.apply_override("examples.sead=1").unwrap_err().message.contains("\"seed\""));
        assert!(c.apply_override("seed=1").is_err());
    }

    #[test]
    fn cross_field_validation() {
        let mut c = parse_config("[input]\npaths = x.bin\n[stages]\nvocab = false\n").unwrap();
        let diags = c.validate();
        assert_eq!(diags.len(), 2, "{diags:?}");
        c.format = Some(Format::JsonLines);
        c.vocab_path = Some("v".into());
        assert!(c.validate().is_empty());
    }
}
