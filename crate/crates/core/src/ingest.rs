//! Corpus containers and corpus statistics.
//!
//! Three line-oriented container formats are supported:
//!
//! - `vert-xml`: documents delimited by `<doc ...>` / `</doc>`. The `id`,
//!   `lang` and `lemmas` attributes are recognised, any other attribute is
//!   kept in [`Document::meta`]. Markup inside a document is kept verbatim
//!   (only the five predefined XML entities are decoded) so that the
//!   cleaning stage can strip it. This grammar is a reconstruction of the
//!   Sketch-Engine style `<doc>` wrapper, without the per-token columns.
//! - `blankline-text`: one or more blank lines separate documents, every
//!   line inside a document is a sentence. Ids are synthesised.
//! - `json-lines`: one object per line with a required `text` and optional
//!   `id`, `lang`, `lemmas` and `meta`.
//!
//! Readers are streaming iterators: memory is bounded by the largest single
//! document.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{xml_escape, xml_unescape};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("document {id} cannot be written as {format}: {reason}")]
    Unrepresentable {
        id: String,
        format: Format,
        reason: String,
    },
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

/// One corpus unit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document {
    pub id: String,
    /// Sentences are separated by newlines when the text is pre-segmented.
    pub text: String,
    pub lang_tag: Option<String>,
    /// One lemma per whitespace token of `text`.
    pub lemmas: Option<Vec<String>>,
    /// Extra container attributes (vert-xml attributes, json-lines `meta`).
    pub meta: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            ..Default::default()
        }
    }

    pub fn with_lang(mut self, lang: impl Into<String>) -> Self {
        self.lang_tag = Some(lang.into());
        self
    }

    pub fn with_lemmas<S: Into<String>>(mut self, lemmas: impl IntoIterator<Item = S>) -> Self {
        self.lemmas = Some(lemmas.into_iter().map(Into::into).collect());
        self
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.text.split_whitespace()
    }

    pub fn word_count(&self) -> usize {
        self.words().count()
    }

    /// Non-empty newline-separated lines.
    pub fn sentences(&self) -> impl Iterator<Item = &str> {
        self.text.lines().filter(|l| !l.trim().is_empty())
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences().count()
    }

    /// Checks the id and lemma-alignment invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty document id".into());
        }
        if let Some(lemmas) = &self.lemmas {
            let words = self.word_count();
            if lemmas.len() != words {
                return Err(format!(
                    "document {} has {} lemmas for {} tokens",
                    self.id,
                    lemmas.len(),
                    words
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    VertXml,
    BlanklineText,
    JsonLines,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::VertXml, Format::BlanklineText, Format::JsonLines];

    pub fn name(self) -> &'static str {
        match self {
            Format::VertXml => "vert-xml",
            Format::BlanklineText => "blankline-text",
            Format::JsonLines => "json-lines",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vert-xml" | "vert" | "xml" => Ok(Format::VertXml),
            "blankline-text" | "blankline" | "text" => Ok(Format::BlanklineText),
            "json-lines" | "jsonl" => Ok(Format::JsonLines),
            other => Err(format!(
                "unknown format `{other}` (expected vert-xml, blankline-text or json-lines)"
            )),
        }
    }
}

/// Opens `path` and returns a streaming document reader.
pub fn read_documents(
    path: impl AsRef<Path>,
    format: Format,
) -> Result<DocumentReader<BufReader<File>>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(DocumentReader::new(BufReader::new(file), format))
}

/// Reads a whole file into memory. Convenience for small corpora and tests.
pub fn read_all(path: impl AsRef<Path>, format: Format) -> Result<Vec<Document>, IngestError> {
    read_documents(path, format)?.collect()
}

pub struct DocumentReader<R> {
    input: R,
    format: Format,
    line: String,
    line_no: usize,
    ordinal: usize,
    finished: bool,
}

impl<R: BufRead> DocumentReader<R> {
    pub fn new(input: R, format: Format) -> Self {
        DocumentReader {
            input,
            format,
            line: String::new(),
            line_no: 0,
            ordinal: 0,
            finished: false,
        }
    }

    /// Reads the next line without its terminator. `Ok(false)` at EOF.
    fn next_line(&mut self) -> Result<bool, IngestError> {
        self.line.clear();
        let n = self.input.read_line(&mut self.line).map_err(|e| {
            if e.kind() == io::ErrorKind::InvalidData {
                IngestError::MalformedRecord {
                    line: self.line_no + 1,
                    message: "invalid UTF-8".into(),
                }
            } else {
                IngestError::Io(e)
            }
        })?;
        if n == 0 {
            return Ok(false);
        }
        self.line_no += 1;
        if self.line.ends_with('\n') {
            self.line.pop();
            if self.line.ends_with('\r') {
                self.line.pop();
            }
        }
        Ok(true)
    }

    fn synth_id(&self) -> String {
        format!("doc-{}", self.ordinal)
    }

    fn malformed(&self, line: usize, message: impl Into<String>) -> IngestError {
        IngestError::MalformedRecord {
            line,
            message: message.into(),
        }
    }

    fn next_blankline(&mut self) -> Result<Option<Document>, IngestError> {
        let mut text = String::new();
        loop {
            if !self.next_line()? {
                break;
            }
            if self.line.trim().is_empty() {
                if text.is_empty() {
                    continue;
                }
                break;
            }
            if !text.is_empty() {
                text.push('\n');
            }
            text.push_str(&self.line);
        }
        if text.is_empty() {
            return Ok(None);
        }
        Ok(Some(Document::new(self.synth_id(), text)))
    }

    fn next_jsonl(&mut self) -> Result<Option<Document>, IngestError> {
        loop {
            if !self.next_line()? {
                return Ok(None);
            }
            if self.line.trim().is_empty() {
                continue;
            }
            let rec: JsonDoc = serde_json::from_str(&self.line)
                .map_err(|e| self.malformed(self.line_no, e.to_string()))?;
            let doc = Document {
                id: rec.id.unwrap_or_else(|| self.synth_id()),
                text: rec.text,
                lang_tag: rec.lang,
                lemmas: rec.lemmas,
                meta: rec.meta.unwrap_or_default(),
            };
            doc.validate().map_err(|m| self.malformed(self.line_no, m))?;
            return Ok(Some(doc));
        }
    }

    fn next_vert(&mut self) -> Result<Option<Document>, IngestError> {
        // Find the next opening tag; anything outside <doc> elements is ignored.
        let (open_line, attrs, mut content) = loop {
            if !self.next_line()? {
                return Ok(None);
            }
            let trimmed = self.line.trim_start();
            if is_doc_open(trimmed) {
                let (attrs, rest) = parse_open_tag(trimmed)
                    .map_err(|m| self.malformed(self.line_no, m))?;
                break (self.line_no, attrs, rest.to_string());
            }
        };

        if let Some(end) = content.find("</doc>") {
            content.truncate(end);
        } else {
            loop {
                if !self.next_line()? {
                    return Err(self.malformed(open_line, "unclosed <doc> element"));
                }
                if is_doc_open(self.line.trim_start()) {
                    return Err(self.malformed(open_line, "unclosed <doc> element"));
                }
                content.push('\n');
                if let Some(end) = self.line.find("</doc>") {
                    content.push_str(&self.line[..end]);
                    break;
                }
                content.push_str(&self.line);
            }
        }

        let mut text = content.as_str();
        text = text.strip_prefix('\n').unwrap_or(text);
        text = text.strip_suffix('\n').unwrap_or(text);

        let mut doc = Document::new(String::new(), xml_unescape(text));
        for (name, value) in attrs {
            match name.as_str() {
                "id" => doc.id = value,
                "lang" => doc.lang_tag = Some(value),
                "lemmas" => {
                    doc.lemmas = Some(value.split_whitespace().map(str::to_string).collect())
                }
                _ => {
                    doc.meta.insert(name, value);
                }
            }
        }
        if doc.id.is_empty() {
            doc.id = self.synth_id();
        }
        doc.validate().map_err(|m| self.malformed(open_line, m))?;
        Ok(Some(doc))
    }
}

impl<R: BufRead> Iterator for DocumentReader<R> {
    type Item = Result<Document, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        let res = match self.format {
            Format::VertXml => self.next_vert(),
            Format::BlanklineText => self.next_blankline(),
            Format::JsonLines => self.next_jsonl(),
        };
        match res {
            Ok(Some(doc)) => {
                self.ordinal += 1;
                Some(Ok(doc))
            }
            Ok(None) => {
                self.finished = true;
                None
            }
            Err(e) => {
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}

fn is_doc_open(s: &str) -> bool {
    s.strip_prefix("<doc")
        .and_then(|r| r.chars().next())
        .is_some_and(|c| c == '>' || c == '/' || c.is_whitespace())
}

type Attrs = Vec<(String, String)>;

/// Parses `<doc a="b" ...>` and returns the attributes and the text after `>`.
fn parse_open_tag(s: &str) -> Result<(Attrs, &str), String> {
    let mut rest = &s["<doc".len()..];
    let mut attrs = Vec::new();
    loop {
        rest = rest.trim_start();
        if let Some(r) = rest.strip_prefix('>') {
            return Ok((attrs, r));
        }
        if rest.starts_with("/>") {
            // Self-closing: an empty document.
            return Ok((attrs, "</doc>"));
        }
        let name_len = rest
            .find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '-' || c == ':' || c == '.'))
            .unwrap_or(rest.len());
        if name_len == 0 {
            return Err("malformed <doc> tag".into());
        }
        let name = &rest[..name_len];
        rest = rest[name_len..].trim_start();
        rest = rest
            .strip_prefix('=')
            .ok_or_else(|| format!("attribute `{name}` has no value"))?
            .trim_start();
        let quote = rest
            .chars()
            .next()
            .filter(|&c| c == '"' || c == '\'')
            .ok_or_else(|| format!("attribute `{name}` value is not quoted"))?;
        rest = &rest[1..];
        let end = rest
            .find(quote)
            .ok_or_else(|| format!("unterminated value for attribute `{name}`"))?;
        attrs.push((name.to_string(), xml_unescape(&rest[..end])));
        rest = &rest[end + 1..];
    }
}

#[derive(Serialize, Deserialize)]
struct JsonDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lemmas: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<BTreeMap<String, String>>,
}

/// Incremental writer, the counterpart of [`DocumentReader`].
pub struct DocumentWriter<W: Write> {
    out: W,
    format: Format,
    count: usize,
}

impl DocumentWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, format: Format) -> Result<Self, IngestError> {
        let file = File::create(path)?;
        Ok(DocumentWriter::new(BufWriter::new(file), format))
    }
}

impl<W: Write> DocumentWriter<W> {
    pub fn new(out: W, format: Format) -> Self {
        DocumentWriter {
            out,
            format,
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    fn unrepresentable(&self, doc: &Document, reason: impl Into<String>) -> IngestError {
        IngestError::Unrepresentable {
            id: doc.id.clone(),
            format: self.format,
            reason: reason.into(),
        }
    }

    pub fn write(&mut self, doc: &Document) -> Result<(), IngestError> {
        match self.format {
            Format::JsonLines => {
                let rec = JsonDoc {
                    id: Some(doc.id.clone()),
                    text: doc.text.clone(),
                    lang: doc.lang_tag.clone(),
                    lemmas: doc.lemmas.clone(),
                    meta: (!doc.meta.is_empty()).then(|| doc.meta.clone()),
                };
                serde_json::to_writer(&mut self.out, &rec).map_err(io::Error::from)?;
                self.out.write_all(b"\n")?;
            }
            Format::BlanklineText => {
                if doc.text.is_empty() || doc.text.split('\n').any(|l| l.trim().is_empty()) {
                    return Err(self.unrepresentable(doc, "text is empty or contains a blank line"));
                }
                if doc.text.split('\n').any(|l| l.ends_with('\r')) {
                    return Err(self.unrepresentable(doc, "line ends with a carriage return"));
                }
                if self.count > 0 {
                    self.out.write_all(b"\n")?;
                }
                self.out.write_all(doc.text.as_bytes())?;
                self.out.write_all(b"\n")?;
            }
            Format::VertXml => {
                if doc.text.split('\n').any(|l| l.ends_with('\r')) {
                    return Err(self.unrepresentable(doc, "line ends with a carriage return"));
                }
                let attr_values = std::iter::once(&doc.id)
                    .chain(doc.lang_tag.iter())
                    .chain(doc.meta.values());
                for v in attr_values {
                    if v.contains(['\n', '\r']) {
                        return Err(self.unrepresentable(doc, "attribute value contains a line break"));
                    }
                }
                let mut tag = format!("<doc id=\"{}\"", xml_escape(&doc.id));
                if let Some(lang) = &doc.lang_tag {
                    tag.push_str(&format!(" lang=\"{}\"", xml_escape(lang)));
                }
                if let Some(lemmas) = &doc.lemmas {
                    if lemmas.iter().any(|l| l.is_empty() || l.contains(char::is_whitespace)) {
                        return Err(self.unrepresentable(doc, "lemma is empty or contains whitespace"));
                    }
                    tag.push_str(&format!(" lemmas=\"{}\"", xml_escape(&lemmas.join(" "))));
                }
                for (k, v) in &doc.meta {
                    let valid = !k.is_empty()
                        && k.chars().all(|c| c.is_alphanumeric() || "_-:.".contains(c))
                        && !matches!(k.as_str(), "id" | "lang" | "lemmas");
                    if !valid {
                        return Err(self.unrepresentable(doc, format!("invalid attribute name `{k}`")));
                    }
                    tag.push_str(&format!(" {}=\"{}\"", k, xml_escape(v)));
                }
                tag.push('>');
                writeln!(self.out, "{tag}")?;
                self.out.write_all(xml_escape(&doc.text).as_bytes())?;
                self.out.write_all(b"\n</doc>\n")?;
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize, IngestError> {
        self.out.flush()?;
        Ok(self.count)
    }
}

/// Writes every document to `path`, returning the number written.
pub fn write_documents<'a, I>(docs: I, path: impl AsRef<Path>, format: Format) -> Result<usize, IngestError>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut writer = DocumentWriter::create(path, format)?;
    for doc in docs {
        writer.write(doc)?;
    }
    writer.finish()
}

/// Document / sentence / word counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: u64,
    pub sentences: u64,
    pub words: u64,
}

impl CorpusStats {
    pub fn new(documents: u64, sentences: u64, words: u64) -> Self {
        CorpusStats {
            documents,
            sentences,
            words,
        }
    }

    pub fn of(doc: &Document) -> Self {
        CorpusStats {
            documents: 1,
            sentences: doc.sentence_count() as u64,
            words: doc.word_count() as u64,
        }
    }

    pub fn observe(&mut self, doc: &Document) {
        *self += CorpusStats::of(doc);
    }

    /// True when every field is ≤ the corresponding field of `other`.
    pub fn le_all(&self, other: &CorpusStats) -> bool {
        self.documents <= other.documents
            && self.sentences <= other.sentences
            && self.words <= other.words
    }
}

impl Add for CorpusStats {
    type Output = CorpusStats;

    fn add(self, rhs: CorpusStats) -> CorpusStats {
        CorpusStats {
            documents: self.documents + rhs.documents,
            sentences: self.sentences + rhs.sentences,
            words: self.words + rhs.words,
        }
    }
}

impl AddAssign for CorpusStats {
    fn add_assign(&mut self, rhs: CorpusStats) {
        *self = *self + rhs;
    }
}

impl Sum for CorpusStats {
    fn sum<I: Iterator<Item = CorpusStats>>(iter: I) -> Self {
        iter.fold(CorpusStats::default(), Add::add)
    }
}

pub fn compute_stats<'a, I>(docs: I) -> CorpusStats
where
    I: IntoIterator<Item = &'a Document>,
{
    docs.into_iter().map(CorpusStats::of).sum()
}

/// Renders rows in the Documents / Sentences / Words layout.
pub fn stats_table(rows: &[(&str, CorpusStats)]) -> String {
    let label_width = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(5);
    let mut out = format!(
        "{:<w$}  {:>12}  {:>12}  {:>14}\n",
        "",
        "Documents",
        "Sentences",
        "Words",
        w = label_width
    );
    for (label, s) in rows {
        out.push_str(&format!(
            "{:<w$}  {:>12}  {:>12}  {:>14}\n",
            label,
            s.documents,
            s.sentences,
            s.words,
            w = label_width
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(s: &str, format: Format) -> Result<Vec<Document>, IngestError> {
        DocumentReader::new(Cursor::new(s.as_bytes().to_vec()), format).collect()
    }

    fn render(docs: &[Document], format: Format) -> String {
        let mut buf = Vec::new();
        let mut w = DocumentWriter::new(&mut buf, format);
        for d in docs {
            w.write(d).unwrap();
        }
        w.finish().unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn blankline_synthesizes_ids() {
        let docs = parse("Tere.\n\nHello.", Format::BlanklineText).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].id, "doc-0");
        assert_eq!(docs[1].id, "doc-1");
        assert_eq!(docs[1].text, "Hello.");
    }

    #[test]
    fn blankline_multiple_blank_lines() {
        let docs = parse("\n\na\nb\n\n \n\nc\n\n", Format::BlanklineText).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].text, "a\nb");
        assert_eq!(docs[1].text, "c");
    }

    #[test]
    fn vert_single_line() {
        let docs = parse(r#"<doc id="a" lang="et">Tere .</doc>"#, Format::VertXml).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].id, "a");
        assert_eq!(docs[0].lang_tag.as_deref(), Some("et"));
        assert_eq!(docs[0].text, "Tere .");
    }

    #[test]
    fn vert_multiline_keeps_markup_and_meta() {
        let src = "<corpus>\n<doc id=\"x\" src='web'>\n<p>Tere &amp; head aega</p>\nTeine lause\n</doc>\n</corpus>\n";
        let docs = parse(src, Format::VertXml).unwrap();
        assert_eq!(docs[0].text, "<p>Tere & head aega</p>\nTeine lause");
        assert_eq!(docs[0].meta.get("src").map(String::as_str), Some("web"));
        assert_eq!(docs[0].lang_tag, None);
    }

    #[test]
    fn vert_unclosed_is_malformed() {
        let err = parse("<doc id=\"a\">\nTere\n", Format::VertXml).unwrap_err();
        assert!(matches!(err, IngestError::MalformedRecord { line: 1, .. }), "{err}");
        let err = parse("<doc id=\"a\">\nTere\n<doc id=\"b\">x</doc>\n", Format::VertXml).unwrap_err();
        assert!(matches!(err, IngestError::MalformedRecord { line: 1, .. }), "{err}");
    }

    #[test]
    fn vert_escapes_lt() {
        let doc = Document::new("e", "1 < 2 </doc> & 3");
        let out = render(std::slice::from_ref(&doc), Format::VertXml);
        assert!(out.contains("1 &lt; 2 &lt;/doc&gt; &amp; 3"));
        assert_eq!(parse(&out, Format::VertXml).unwrap(), vec![doc]);
    }

    #[test]
    fn jsonl_missing_text_is_malformed() {
        let src = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\"}\n";
        let err = parse(src, Format::JsonLines).unwrap_err();
        assert!(matches!(err, IngestError::MalformedRecord { line: 2, .. }), "{err}");
        let err = parse("{not json", Format::JsonLines).unwrap_err();
        assert!(matches!(err, IngestError::MalformedRecord { line: 1, .. }));
    }

    #[test]
    fn jsonl_lemma_alignment_checked() {
        let src = r#"{"text":"a b","lemmas":["a"]}"#;
        assert!(parse(src, Format::JsonLines).is_err());
        let src = r#"{"text":"a b","lemmas":["a","b"],"lang":"et"}"#;
        let d = &parse(src, Format::JsonLines).unwrap()[0];
        assert_eq!(d.id, "doc-0");
        assert_eq!(d.lemmas.as_ref().unwrap().len(), 2);
    }

    #[test]
    fn unreadable_file() {
        let err = read_documents("/nonexistent/corpus.txt", Format::BlanklineText).err().unwrap();
        assert!(matches!(err, IngestError::UnreadableFile { .. }));
    }

    #[test]
    fn blankline_rejects_blank_lines_in_text() {
        let mut buf = Vec::new();
        let mut w = DocumentWriter::new(&mut buf, Format::BlanklineText);
        assert!(w.write(&Document::new("a", "x\n\ny")).is_err());
        assert!(w.write(&Document::new("a", "")).is_err());
    }

    #[test]
    fn empty_stream_writes_valid_empty_file() {
        for format in Format::ALL {
            let out = render(&[], format);
            assert!(out.is_empty());
            assert!(parse(&out, format).unwrap().is_empty());
        }
    }

    #[test]
    fn stats_hand_count() {
        assert_eq!(compute_stats(&[]), CorpusStats::new(0, 0, 0));
        let docs = [
            Document::new("a", "Tere maailm.\nKuidas läheb?"),
            Document::new("b", "Tere."),
        ];
        assert_eq!(compute_stats(&docs), CorpusStats::new(2, 3, 5));
    }

    #[test]
    fn format_names_parse() {
        for f in Format::ALL {
            assert_eq!(f.name().parse::<Format>().unwrap(), f);
        }
        assert!("csv".parse::<Format>().is_err());
    }
}
