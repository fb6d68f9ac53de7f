//! Evaluation scorers: token accuracy, entity-span F1 with conlleval chunk
//! semantics, and classification accuracy.
//!
//! Chunking follows conlleval for B/I/O tags: a chunk starts at `B-X`, or at
//! `I-X` when the previous tag is `O` or of another type, and continues over
//! `I-X`. Sequence boundaries close every open chunk. A predicted chunk is
//! correct when a gold chunk has the same type and exact boundaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("gold has {gold} items but prediction has {pred}")]
    CountMismatch { gold: usize, pred: usize },
    #[error("sequence {0} differs in length between gold and prediction")]
    LengthMismatch(usize),
    #[error("nothing to score")]
    Empty,
    #[error("malformed tag {0:?}")]
    MalformedTag(String),
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Fraction of tokens whose predicted tag equals the gold tag.
pub fn tagging_accuracy<S: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<S>]) -> Result<f64, MetricsError> {
    check_aligned(gold, pred)?;
    let (mut correct, mut total) = (0usize, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        total += g.len();
        correct += g.iter().zip(p).filter(|(a, b)| a.as_ref() == b.as_ref()).count();
    }
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(correct as f64 / total as f64)
}

/// Fraction of exactly matching labels.
pub fn classification_accuracy<S: AsRef<str>>(gold: &[S], pred: &[S]) -> Result<f64, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::CountMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let correct = gold.iter().zip(pred).filter(|(a, b)| a.as_ref() == b.as_ref()).count();
    Ok(correct as f64 / gold.len() as f64)
}

fn check_aligned<S>(gold: &[Vec<S>], pred: &[Vec<S>]) -> Result<(), MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::CountMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    match gold.iter().zip(pred).position(|(g, p)| g.len() != p.len()) {
        Some(i) => Err(MetricsError::LengthMismatch(i)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_tag(tag: &str) -> Result<Tag<'_>, MetricsError> {
    let bad = || MetricsError::MalformedTag(tag.to_string());
    if tag == "O" {
        return Ok(Tag::Outside);
    }
    let (prefix, ty) = tag.split_once('-').ok_or_else(bad)?;
    if ty.is_empty() {
        return Err(bad());
    }
    match prefix {
        "B" => Ok(Tag::Begin(ty)),
        "I" => Ok(Tag::Inside(ty)),
        _ => Err(bad()),
    }
}

/// A chunk as `(start, end_exclusive, type)` within one sequence.
pub type Span = (usize, usize, String);

/// Chunks of one tag sequence.
pub fn extract_spans<S: AsRef<str>>(tags: &[S]) -> Result<Vec<Span>, MetricsError> {
    let tags: Vec<Tag> = tags.iter().map(|t| parse_tag(t.as_ref())).collect::<Result<_, _>>()?;
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let continues = matches!((open, tag), (Some((_, t)), Tag::Inside(u)) if t == *u);
        if continues {
            continue;
        }
        if let Some((start, ty)) = open.take() {
            spans.push((start, i, ty.to_string()));
        }
        if let Tag::Begin(ty) | Tag::Inside(ty) = tag {
            open = Some((i, ty));
        }
    }
    if let Some((start, ty)) = open {
        spans.push((start, tags.len(), ty.to_string()));
    }
    Ok(spans)
}

/// Gold/predicted/correct chunk counts and the derived percentages.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpanCounts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl SpanCounts {
    pub fn precision(&self) -> f64 {
        percent(self.correct, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        percent(self.correct, self.gold)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpanF1Report {
    pub overall: SpanCounts,
    /// Every type seen in gold or prediction.
    pub per_type: BTreeMap<String, SpanCounts>,
    pub tokens: usize,
    /// Tokens whose full predicted tag equals the gold tag.
    pub correct_tags: usize,
}

impl SpanF1Report {
    pub fn token_accuracy(&self) -> f64 {
        percent(self.correct_tags, self.tokens)
    }

    /// The conlleval text layout.
    pub fn to_text(&self) -> String {
        let o = &self.overall;
        let mut s = format!(
            "processed {} tokens with {} phrases; found: {} phrases; correct: {}.\n",
            self.tokens, o.gold, o.predicted, o.correct
        );
        if self.tokens > 0 {
            let _ = writeln!(
                s,
                "accuracy: {:6.2}%; precision: {:6.2}%; recall: {:6.2}%; FB1: {:6.2}",
                self.token_accuracy(),
                o.precision(),
                o.recall(),
                o.f1()
            );
        }
        for (ty, c) in &self.per_type {
            let _ = writeln!(
                s,
                "{:>17}: precision: {:6.2}%; recall: {:6.2}%; FB1: {:6.2}  {}",
                ty,
                c.precision(),
                c.recall(),
                c.f1(),
                c.predicted
            );
        }
        s
    }

    /// One JSON object per line: the overall scores first, then each type.
    pub fn to_jsonl(&self) -> String {
        let line = |name: &str, c: &SpanCounts| {
            json!({
                "type": name,
                "precision": round2(c.precision()),
                "recall": round2(c.recall()),
                "f1": round2(c.f1()),
                "gold": c.gold,
                "predicted": c.predicted,
                "correct": c.correct,
            })
        };
        let mut overall = line("overall", &self.overall);
        overall["tokens"] = json!(self.tokens);
        overall["accuracy"] = json!(round2(self.token_accuracy()));
        let mut s = format!("{overall}\n");
        for (ty, c) in &self.per_type {
            let _ = writeln!(s, "{}", line(ty, c));
        }
        s
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Micro-averaged chunk precision, recall and F1, overall and per type.
pub fn ner_span_f1<S: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<S>]) -> Result<SpanF1Report, MetricsError> {
    check_aligned(gold, pred)?;
    let mut report = SpanF1Report::default();
    for (g, p) in gold.iter().zip(pred) {
        let gs = extract_spans(g)?;
        let ps = extract_spans(p)?;
        report.tokens += g.len();
        report.correct_tags += g.iter().zip(p).filter(|(a, b)| a.as_ref() == b.as_ref()).count();
        for (_, _, ty) in &gs {
            report.per_type.entry(ty.clone()).or_default().gold += 1;
        }
        for span in &ps {
            let entry = report.per_type.entry(span.2.clone()).or_default();
            entry.predicted += 1;
            if gs.contains(span) {
                entry.correct += 1;
            }
        }
    }
    for c in report.per_type.values() {
        report.overall.gold += c.gold;
        report.overall.predicted += c.predicted;
        report.overall.correct += c.correct;
    }
    Ok(report)
}

/// Columns `token ... gold pred`, blank line between sequences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConllData {
    pub tokens: Vec<Vec<String>>,
    pub gold: Vec<Vec<String>>,
    pub pred: Vec<Vec<String>>,
}

/// Parses whitespace-separated columns; the last two are gold and predicted.
pub fn parse_conll(src: &str) -> Result<ConllData, MetricsError> {
    let mut data = ConllData::default();
    let mut open = false;
    for (n, line) in src.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            open = false;
            continue;
        }
        if cols.len() < 3 {
            return Err(MetricsError::MalformedLine {
                line: n + 1,
                message: format!("expected at least 3 columns, found {}", cols.len()),
            });
        }
        if !open {
            data.tokens.push(Vec::new());
            data.gold.push(Vec::new());
            data.pred.push(Vec::new());
            open = true;
        }
        let k = cols.len();
        data.tokens.last_mut().expect("open").push(cols[0].to_string());
        data.gold.last_mut().expect("open").push(cols[k - 2].to_string());
        data.pred.last_mut().expect("open").push(cols[k - 1].to_string());
    }
    Ok(data)
}

pub fn read_conll(path: impl AsRef<Path>) -> Result<ConllData, MetricsError> {
    let path = path.as_ref();
    let src = fs::read_to_string(path).map_err(|e| MetricsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_conll(&src)
}

/// One `gold pred` pair per non-blank line (last two columns).
pub fn parse_label_pairs(src: &str) -> Result<(Vec<String>, Vec<String>), MetricsError> {
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for (n, line) in src.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        match cols.len() {
            0 => {}
            1 => {
                return Err(MetricsError::MalformedLine {
                    line: n + 1,
                    message: "expected gold and predicted labels".into(),
                })
            }
            k => {
                gold.push(cols[k - 2].to_string());
                pred.push(cols[k - 1].to_string());
            }
        }
    }
    Ok((gold, pred))
}
