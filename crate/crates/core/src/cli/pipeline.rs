//! End-to-end run: ingest, cleaning stages, vocabulary, pretraining shards.
//!
//! Documents stream through in fixed-size chunks. Pure per-document work runs
//! on the current rayon pool; deduplication and all output writes happen in
//! input order on the calling thread, so outputs do not depend on the number
//! of workers.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::bpe::{train_from_counts, Vocab, WordCounts, MERGES_FILE, VOCAB_FILE};
use crate::clean::{
    dedup_key, heuristic_filter, strip_document, truecase, CasingLexicon, CleanError, DropReason, DropRecord,
    Deduplicator, LanguageFilter, LanguageProfiles, LexiconBuilder, StopwordList,
};
use crate::ingest::{read_documents, stats_table, CorpusStats, Document, DocumentWriter, Format};
use crate::pretrain::{
    instances_from_document, serialize_example, tokenize_document, PretrainError, SerializedExample, ShardWriter,
    TokenizedDocument,
};

use super::config::PipelineConfig;

const CHUNK: usize = 1024;

pub const CLEANED_FILE: &str = "cleaned.jsonl";
pub const DROPS_FILE: &str = "drops.jsonl";
pub const LEXICON_FILE: &str = "lexicon.tsv";
const STAGED_FILE: &str = ".staged.jsonl";

type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// A failure attributed to the pipeline stage that raised it.
#[derive(Debug, Error)]
#[error("{stage} stage: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: BoxError,
}

impl StageError {
    pub fn new(stage: &'static str, source: impl Into<BoxError>) -> Self {
        StageError {
            stage,
            source: source.into(),
        }
    }
}

fn at<E: Into<BoxError>>(stage: &'static str) -> impl FnOnce(E) -> StageError {
    move |e| StageError::new(stage, e)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: &'static str,
    pub input: CorpusStats,
    pub kept: CorpusStats,
    /// Drop counts by reason kind.
    pub drops: BTreeMap<&'static str, u64>,
}

impl StageReport {
    fn new(stage: &'static str) -> Self {
        StageReport {
            stage,
            input: CorpusStats::default(),
            kept: CorpusStats::default(),
            drops: BTreeMap::new(),
        }
    }

    pub fn dropped(&self) -> u64 {
        self.drops.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabSummary {
    pub pieces: usize,
    pub merges: usize,
    pub alphabet: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleSummary {
    pub total: u64,
    pub random_next: u64,
    pub shard_sizes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineReport {
    /// `ingest` first, then each enabled cleaning stage in order.
    pub stages: Vec<StageReport>,
    pub vocab: Option<VocabSummary>,
    pub examples: Option<ExampleSummary>,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
}

fn stats_json(s: &CorpusStats) -> Value {
    json!({ "documents": s.documents, "sentences": s.sentences, "words": s.words })
}

impl PipelineReport {
    pub fn before(&self) -> CorpusStats {
        self.stages.first().map(|s| s.kept).unwrap_or_default()
    }

    pub fn after(&self) -> CorpusStats {
        self.stages.last().map(|s| s.kept).unwrap_or_default()
    }

    pub fn to_jsonl(&self) -> String {
        let mut lines: Vec<Value> = self
            .stages
            .iter()
            .map(|s| {
                json!({
                    "record": "stage",
                    "stage": s.stage,
                    "input": stats_json(&s.input),
                    "kept": stats_json(&s.kept),
                    "drops": s.drops,
                })
            })
            .collect();
        lines.push(json!({
            "record": "summary",
            "before": stats_json(&self.before()),
            "after": stats_json(&self.after()),
        }));
        if let Some(v) = &self.vocab {
            lines.push(json!({ "record": "vocab", "pieces": v.pieces, "merges": v.merges, "alphabet": v.alphabet }));
        }
        if let Some(e) = &self.examples {
            lines.push(json!({
                "record": "examples",
                "total": e.total,
                "random_next": e.random_next,
                "shard_sizes": e.shard_sizes,
            }));
        }
        lines.push(json!({ "record": "artifacts", "files": self.artifacts }));
        lines.iter().map(|l| format!("{l}\n")).collect()
    }

    /// Before/after statistics followed by per-stage drop counts.
    pub fn table(&self) -> String {
        let mut out = stats_table(&[("Before cleanup", self.before()), ("After cleanup", self.after())]);
        for s in self.stages.iter().skip(1) {
            let detail: Vec<String> = s.drops.iter().map(|(k, n)| format!("{k}={n}")).collect();
            out.push_str(&format!("{:<12} dropped {:>8}  {}\n", s.stage, s.dropped(), detail.join(" ")));
        }
        out
    }
}

/// Pure per-document results computed in parallel.
struct Assessed {
    raw: CorpusStats,
    doc: Document,
    stats: CorpusStats,
    lang: Result<(), DropReason>,
    key: Option<crate::clean::DedupKey>,
    heuristics: Result<(), DropReason>,
}

struct Resources {
    profiles: Option<LanguageProfiles>,
    stopwords: StopwordList,
}

fn load_resources(config: &PipelineConfig) -> Result<Resources, StageError> {
    let profiles = match (&config.lang_profiles, config.stages.langfilter) {
        (Some(dir), true) => Some(LanguageProfiles::load_dir(dir).map_err(at("langfilter"))?),
        _ => None,
    };
    let stopwords = match &config.stopwords_path {
        Some(p) if config.stages.heuristics => StopwordList::load(p).map_err(at("heuristics"))?,
        _ => StopwordList::estonian(),
    };
    Ok(Resources { profiles, stopwords })
}

/// Runs every enabled stage on the current rayon pool and writes the report.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport, StageError> {
    let diags = config.validate();
    if !diags.is_empty() {
        let msg: Vec<String> = diags.iter().map(ToString::to_string).collect();
        return Err(StageError::new("config", msg.join("; ")));
    }
    let format = config.input_format().expect("validated");
    let out_dir = &config.output_dir;
    fs::create_dir_all(out_dir).map_err(at("output"))?;

    let resources = load_resources(config)?;
    let profiles = resources.profiles.as_ref().unwrap_or_else(|| LanguageProfiles::builtin());
    let lang_filter = LanguageFilter::new(config.target_lang.clone(), config.thresholds.lang_confidence_min, profiles);
    let thresholds = crate::clean::FilterThresholds {
        stopwords: resources.stopwords,
        ..config.thresholds.clone()
    };

    let st = config.stages;
    let mut ingest = StageReport::new("ingest");
    let mut strip = StageReport::new("strip");
    let mut lang = StageReport::new("langfilter");
    let mut dedup = StageReport::new("dedup");
    let mut heur = StageReport::new("heuristics");
    let mut seen = Deduplicator::new();

    let staged_path = out_dir.join(STAGED_FILE);
    let mut staged = DocumentWriter::create(&staged_path, Format::JsonLines).map_err(at("output"))?;
    let mut drops = BufWriter::new(File::create(out_dir.join(DROPS_FILE)).map_err(at("output"))?);
    let mut lexicon_builder = LexiconBuilder::new();
    let mut lemma_docs = 0u64;
    let build_lexicon = st.truecase && config.lexicon_path.is_none();

    let assess = |raw: Document| -> Assessed {
        let raw_stats = CorpusStats::of(&raw);
        let doc = if st.strip { strip_document(&raw) } else { raw };
        let stats = CorpusStats::of(&doc);
        let lang = if st.langfilter { lang_filter.check(&doc) } else { Ok(()) };
        let key = st.dedup.then(|| dedup_key(&doc.text));
        let heuristics = if st.heuristics { heuristic_filter(&doc.text, &thresholds) } else { Ok(()) };
        Assessed {
            raw: raw_stats,
            doc,
            stats,
            lang,
            key,
            heuristics,
        }
    };

    let mut record_drop = |report: &mut StageReport, id: &str, reason: DropReason| -> Result<(), StageError> {
        *report.drops.entry(reason.kind()).or_default() += 1;
        let rec = DropRecord {
            id: id.to_string(),
            stage: report.stage.to_string(),
            reason,
        };
        writeln!(drops, "{}", rec.to_json()).map_err(at("output"))
    };

    for path in &config.inputs {
        let mut reader = read_documents(path, format).map_err(at("ingest"))?;
        loop {
            let chunk: Vec<Document> = reader
                .by_ref()
                .take(CHUNK)
                .collect::<Result<_, _>>()
                .map_err(at("ingest"))?;
            if chunk.is_empty() {
                break;
            }
            let assessed: Vec<Assessed> = chunk.into_par_iter().map(&assess).collect();
            let mut survivors = Vec::new();
            for a in assessed {
                ingest.input += a.raw;
                ingest.kept += a.raw;
                if st.strip {
                    strip.input += a.raw;
                    strip.kept += a.stats;
                }
                if st.langfilter {
                    lang.input += a.stats;
                    if let Err(reason) = a.lang {
                        record_drop(&mut lang, &a.doc.id, reason)?;
                        continue;
                    }
                    lang.kept += a.stats;
                }
                if let Some(key) = a.key {
                    dedup.input += a.stats;
                    if !seen.insert(key) {
                        record_drop(&mut dedup, &a.doc.id, DropReason::Duplicate(key))?;
                        continue;
                    }
                    dedup.kept += a.stats;
                }
                if st.heuristics {
                    heur.input += a.stats;
                    if let Err(reason) = a.heuristics {
                        record_drop(&mut heur, &a.doc.id, reason)?;
                        continue;
                    }
                    heur.kept += a.stats;
                }
                staged.write(&a.doc).map_err(at("output"))?;
                survivors.push(a.doc);
            }
            if build_lexicon {
                let (builder, n) = survivors
                    .par_iter()
                    .fold(
                        || (LexiconBuilder::new(), 0u64),
                        |(mut b, n), d| match b.add_document(d) {
                            Ok(()) => (b, n + 1),
                            Err(_) => (b, n),
                        },
                    )
                    .reduce(
                        || (LexiconBuilder::new(), 0),
                        |(mut a, n), (b, m)| {
                            a.merge(b);
                            (a, n + m)
                        },
                    );
                lexicon_builder.merge(builder);
                lemma_docs += n;
            }
        }
    }
    staged.finish().map_err(at("output"))?;
    drops.flush().map_err(at("output"))?;

    let mut stages = vec![ingest];
    for (on, report) in [(st.strip, strip), (st.langfilter, lang), (st.dedup, dedup), (st.heuristics, heur)] {
        if on {
            stages.push(report);
        }
    }
    let mut artifacts = vec![CLEANED_FILE.to_string(), DROPS_FILE.to_string()];

    // truecasing needs the whole lexicon, so it is a second pass
    let lexicon = if !st.truecase {
        None
    } else if let Some(p) = &config.lexicon_path {
        Some(CasingLexicon::load(p).map_err(at("truecase"))?)
    } else {
        let kept = stages.last().expect("ingest").kept.documents;
        if lemma_docs == 0 && kept > 0 {
            return Err(StageError::new(
                "truecase",
                CleanError::MissingLemmas("(all documents; supply truecase.lexicon or lemma annotations)".into()),
            ));
        }
        let lex = lexicon_builder.finish();
        let f = File::create(out_dir.join(LEXICON_FILE)).map_err(at("output"))?;
        let mut w = BufWriter::new(f);
        lex.write_tsv(&mut w).and_then(|_| w.flush()).map_err(at("output"))?;
        artifacts.push(LEXICON_FILE.to_string());
        Some(lex)
    };

    let mut tc = StageReport::new("truecase");
    let mut counts = WordCounts::new();
    {
        let mut cleaned = DocumentWriter::create(out_dir.join(CLEANED_FILE), Format::JsonLines).map_err(at("output"))?;
        let mut reader = read_documents(&staged_path, Format::JsonLines).map_err(at("truecase"))?;
        loop {
            let chunk: Vec<Document> = reader
                .by_ref()
                .take(CHUNK)
                .collect::<Result<_, _>>()
                .map_err(at("truecase"))?;
            if chunk.is_empty() {
                break;
            }
            let done: Vec<Document> = match &lexicon {
                Some(lex) => chunk.par_iter().map(|d| truecase(d, lex)).collect(),
                None => chunk,
            };
            for (d, stats) in done.iter().map(|d| (d, CorpusStats::of(d))) {
                tc.input += stats;
                tc.kept += stats;
                cleaned.write(d).map_err(at("output"))?;
            }
            if st.vocab {
                let chunk_counts = done
                    .par_iter()
                    .fold(WordCounts::new, |mut c, d| {
                        c.add_text(&d.text);
                        c
                    })
                    .reduce(WordCounts::new, |mut a, b| {
                        a.merge(b);
                        a
                    });
                counts.merge(chunk_counts);
            }
        }
        cleaned.finish().map_err(at("output"))?;
    }
    fs::remove_file(&staged_path).map_err(at("output"))?;
    if st.truecase {
        stages.push(tc);
    }

    let mut vocab_summary = None;
    let vocab = if st.vocab {
        let vocab = train_from_counts(&counts, config.vocab_size).map_err(at("vocab"))?;
        vocab.save(out_dir).map_err(at("vocab"))?;
        artifacts.push(VOCAB_FILE.to_string());
        artifacts.push(MERGES_FILE.to_string());
        vocab_summary = Some(VocabSummary {
            pieces: vocab.len(),
            merges: vocab.merges().len(),
            alphabet: vocab.alphabet_len(),
        });
        Some(vocab)
    } else if st.examples {
        let dir = config.vocab_path.as_ref().expect("validated");
        Some(Vocab::load(dir).map_err(at("vocab"))?)
    } else {
        None
    };

    let mut example_summary = None;
    if st.examples {
        let vocab = vocab.as_ref().expect("vocab present");
        let docs: Vec<Document> = crate::ingest::read_all(out_dir.join(CLEANED_FILE), Format::JsonLines)
            .map_err(at("examples"))?;
        let summary = write_examples(&docs, vocab, config, out_dir).map_err(at("examples"))?;
        artifacts.extend(
            (0..config.generation.shards)
                .map(|i| crate::pretrain::shard_path("", i, config.generation.shards).display().to_string()),
        );
        example_summary = Some(summary);
    }

    let report = PipelineReport {
        stages,
        vocab: vocab_summary,
        examples: example_summary,
        artifacts,
    };
    let report_path = config.report_path();
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(at("output"))?;
    }
    fs::write(&report_path, report.to_jsonl()).map_err(at("output"))?;
    Ok(report)
}

/// Generates, serializes and shards every instance in (round, document) order.
pub fn write_examples(
    docs: &[Document],
    vocab: &Vocab,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<ExampleSummary, PretrainError> {
    let gen = &config.generation;
    gen.validate()?;
    let tokenized: Vec<TokenizedDocument> = docs
        .par_iter()
        .map(|d| tokenize_document(d, vocab))
        .filter(|t| !t.is_empty())
        .collect();
    if tokenized.len() < 2 {
        return Err(PretrainError::CorpusTooSmall(tokenized.len()));
    }
    let mut writer = ShardWriter::create(out_dir, gen.shards)?;
    let mut random_next = 0u64;
    for dupe in 0..gen.dupe_factor {
        for start in (0..tokenized.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(tokenized.len());
            let batch: Vec<Vec<SerializedExample>> = (start..end)
                .into_par_iter()
                .map(|d| {
                    instances_from_document(&tokenized, d, dupe, vocab, gen)?
                        .iter()
                        .map(|inst| serialize_example(inst, vocab, gen))
                        .collect()
                })
                .collect::<Result<_, PretrainError>>()?;
            for ex in batch.iter().flatten() {
                random_next += ex.next_sentence_labels as u64;
                writer.write(ex)?;
            }
        }
    }
    let total = writer.written();
    writer.finish()?;
    let n = gen.shards as u64;
    let shard_sizes = (0..n).map(|i| total / n + u64::from(i < total % n)).collect();
    Ok(ExampleSummary {
        total,
        random_next,
        shard_sizes,
    })
}

/// Output file for the cleaned corpus of a run.
pub fn cleaned_path(config: &PipelineConfig) -> PathBuf {
    config.output_dir.join(CLEANED_FILE)
}
