//! Command line: every stage as a subcommand plus `run` for the whole
//! pipeline.
//!
//! Exit codes are 0 on success, 1 for invalid arguments or configuration and
//! 2 when a stage fails at run time.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::bpe::{train_from_counts, Vocab, WordCounts};
use crate::clean::{
    build_casing_lexicon, dedup_key, heuristic_filter, strip_document, truecase, CasingLexicon, Deduplicator,
    DropReason, DropRecord, FilterThresholds, LanguageFilter, LanguageProfiles, StopwordList,
};
use crate::ingest::{read_all, read_documents, stats_table, CorpusStats, Document, DocumentWriter, Format};
use crate::metrics::{
    classification_accuracy, ner_span_f1, parse_label_pairs, read_conll, tagging_accuracy, MetricsError,
};
use crate::pretrain::{read_tfrecords, GenerationConfig};

pub mod config;
pub mod pipeline;

pub use config::{parse_config, validate_config, Diagnostic, PipelineConfig, StageToggles};
pub use pipeline::{run_pipeline, write_examples, PipelineReport, StageError, StageReport};

const CHUNK: usize = 1024;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("invalid configuration:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<Diagnostic>),
    #[error(transparent)]
    Stage(#[from] StageError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) | CliError::Config(_) => 1,
            CliError::Stage(_) => 2,
        }
    }
}

fn stage<E: Into<Box<dyn std::error::Error + Send + Sync>>>(name: &'static str) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Stage(StageError::new(name, e))
}

#[derive(Debug, Parser)]
#[command(name = "bertprep", version, about = "Corpus cleaning, BPE vocabulary and pretraining-data toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// RNG seed for example generation
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Input container format (default: from the file extension)
    #[arg(long, global = true, value_parser = parse_format)]
    pub format: Option<Format>,
    /// Write a json-lines report here
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

#[derive(Debug, Clone, Args)]
pub struct DocIo {
    /// Input corpus files
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output corpus file (format from the extension, json-lines otherwise)
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Document, sentence and word counts
    Stats {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Strip markup and drop non-target-language documents
    Clean {
        #[command(flatten)]
        io: DocIo,
        #[arg(long)]
        no_strip: bool,
        #[arg(long)]
        no_langfilter: bool,
        #[arg(long, default_value = "et")]
        target_lang: String,
        #[arg(long, default_value_t = 0.95)]
        lang_confidence_min: f64,
        /// Directory of language profile JSON files
        #[arg(long)]
        lang_profiles: Option<PathBuf>,
    },
    /// Remove exact duplicates (case- and whitespace-insensitive)
    Dedup {
        #[command(flatten)]
        io: DocIo,
    },
    /// Word-count, stopword and punctuation filters
    Filter {
        #[command(flatten)]
        io: DocIo,
        #[arg(long, default_value_t = 10)]
        min_words: usize,
        #[arg(long, default_value_t = 0.6)]
        max_stopword_ratio: f64,
        #[arg(long, default_value_t = 0.3)]
        max_punct_ratio: f64,
        /// Stopword list, one form per line (default: bundled Estonian list)
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// Restore canonical casing from lemma evidence or a lexicon file
    Truecase {
        #[command(flatten)]
        io: DocIo,
        /// Use this lexicon instead of building one from lemmas
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Also write the lexicon used
        #[arg(long)]
        write_lexicon: Option<PathBuf>,
    },
    /// Train a BPE vocabulary
    BpeTrain {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output directory for vocab.txt and merges.txt
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 50_000)]
        vocab_size: usize,
    },
    /// Encode documents, one line of ids per sentence
    BpeEncode {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory holding vocab.txt and merges.txt
        #[arg(long)]
        vocab: PathBuf,
        /// Print pieces instead of ids
        #[arg(long)]
        pieces: bool,
    },
    /// Generate masked-LM / next-sentence examples as TFRecord shards
    MakeExamples {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Decode TFRecord shards to json-lines
    ReadExamples {
        #[arg(required = true)]
        shards: Vec<PathBuf>,
        /// Stop after this many examples
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Token tagging accuracy of a `token gold pred` file
    ScoreTags { file: PathBuf },
    /// Entity-span precision, recall and F1 of a `token gold pred` file
    ScoreNer {
        file: PathBuf,
        /// Print json-lines instead of the text report
        #[arg(long)]
        json: bool,
    },
    /// Classification accuracy of a `gold pred` file
    ScoreCls { file: PathBuf },
    /// The full pipeline
    Run {
        /// Configuration file of `[section]` headers and `key = value` lines
        #[arg(long)]
        config: Option<PathBuf>,
        /// Input files (replace input.paths)
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Output directory (replaces output.dir)
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Override a setting: section.key=value
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 128)]
    pub max_seq_length: usize,
    #[arg(long, default_value_t = 0.15)]
    pub masked_lm_prob: f64,
    #[arg(long, default_value_t = 0.5)]
    pub random_next_prob: f64,
    #[arg(long, default_value_t = 0.1)]
    pub short_seq_prob: f64,
    #[arg(long, default_value_t = 10)]
    pub dupe_factor: usize,
    #[arg(long, default_value_t = 4)]
    pub shards: usize,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(&cli.global, &cli.command))
}

fn dispatch(g: &GlobalArgs, command: &Command) -> Result<(), CliError> {
    match command {
        Command::Stats { inputs } => cmd_stats(g, inputs),
        Command::Clean {
            io,
            no_strip,
            no_langfilter,
            target_lang,
            lang_confidence_min,
            lang_profiles,
        } => {
            if !(0.0..=1.0).contains(lang_confidence_min) {
                return Err(CliError::Invalid("--lang-confidence-min must be in [0, 1]".into()));
            }
            let loaded = match lang_profiles {
                Some(dir) => Some(LanguageProfiles::load_dir(dir).map_err(stage("langfilter"))?),
                None => None,
            };
            let profiles = loaded.as_ref().unwrap_or_else(|| LanguageProfiles::builtin());
            let filter = LanguageFilter::new(target_lang.clone(), *lang_confidence_min, profiles);
            let (strip, lang) = (!no_strip, !no_langfilter);
            transform(g, io, "langfilter", |doc| {
                let doc = if strip { strip_document(&doc) } else { doc };
                if lang {
                    filter.check(&doc)?;
                }
                Ok(doc)
            })
        }
        Command::Dedup { io } => cmd_dedup(g, io),
        Command::Filter {
            io,
            min_words,
            max_stopword_ratio,
            max_punct_ratio,
            stopwords,
        } => {
            let thresholds = FilterThresholds {
                min_words: *min_words,
                max_stopword_ratio: *max_stopword_ratio,
                max_punct_ratio: *max_punct_ratio,
                stopwords: match stopwords {
                    Some(p) => StopwordList::load(p).map_err(stage("heuristics"))?,
                    None => StopwordList::estonian(),
                },
                ..FilterThresholds::default()
            };
            thresholds.validate().map_err(CliError::Invalid)?;
            transform(g, io, "heuristics", |doc| {
                heuristic_filter(&doc.text, &thresholds)?;
                Ok(doc)
            })
        }
        Command::Truecase {
            io,
            lexicon,
            write_lexicon,
        } => {
            let lex = match lexicon {
                Some(p) => CasingLexicon::load(p).map_err(stage("truecase"))?,
                None => {
                    let docs = read_inputs(g, &io.inputs)?;
                    build_casing_lexicon(&docs).map_err(stage("truecase"))?
                }
            };
            if let Some(p) = write_lexicon {
                let mut w = BufWriter::new(File::create(p).map_err(stage("output"))?);
                lex.write_tsv(&mut w).and_then(|_| w.flush()).map_err(stage("output"))?;
            }
            transform(g, io, "truecase", |doc| Ok(truecase(&doc, &lex)))
        }
        Command::BpeTrain {
            inputs,
            output,
            vocab_size,
        } => cmd_bpe_train(g, inputs, output, *vocab_size),
        Command::BpeEncode { inputs, vocab, pieces } => cmd_bpe_encode(g, inputs, vocab, *pieces),
        Command::MakeExamples {
            inputs,
            vocab,
            output,
            gen,
        } => cmd_make_examples(g, inputs, vocab, output, gen),
        Command::ReadExamples { shards, limit } => cmd_read_examples(shards, *limit),
        Command::ScoreTags { file } => {
            let d = read_conll(file).map_err(invalid_input)?;
            let acc = tagging_accuracy(&d.gold, &d.pred).map_err(invalid_input)?;
            println!("accuracy: {:.2}%", 100.0 * acc);
            write_report(g, &format!("{}\n", json!({ "record": "score-tags", "accuracy": acc })))
        }
        Command::ScoreNer { file, json } => {
            let d = read_conll(file).map_err(invalid_input)?;
            let report = ner_span_f1(&d.gold, &d.pred).map_err(invalid_input)?;
            print!("{}", if *json { report.to_jsonl() } else { report.to_text() });
            write_report(g, &report.to_jsonl())
        }
        Command::ScoreCls { file } => {
            let src = fs::read_to_string(file).map_err(stage("score"))?;
            let (gold, pred) = parse_label_pairs(&src).map_err(invalid_input)?;
            let acc = classification_accuracy(&gold, &pred).map_err(invalid_input)?;
            println!("accuracy: {:.2}%", 100.0 * acc);
            write_report(g, &format!("{}\n", json!({ "record": "score-cls", "accuracy": acc })))
        }
        Command::Run {
            config,
            inputs,
            output,
            overrides,
        } => cmd_run(g, config.as_deref(), inputs, output.as_deref(), overrides),
    }
}

/// Unreadable files are runtime failures; malformed content is invalid input.
fn invalid_input(e: MetricsError) -> CliError {
    match e {
        MetricsError::Io { .. } => CliError::Stage(StageError::new("score", e)),
        other => CliError::Invalid(other.to_string()),
    }
}

fn input_format(g: &GlobalArgs, path: &Path) -> Result<Format, CliError> {
    g.format.or_else(|| config::infer_format(path)).ok_or_else(|| {
        CliError::Invalid(format!("cannot infer the format of {}; pass --format", path.display()))
    })
}

fn output_format(path: &Path) -> Format {
    config::infer_format(path).unwrap_or(Format::JsonLines)
}

fn read_inputs(g: &GlobalArgs, inputs: &[PathBuf]) -> Result<Vec<Document>, CliError> {
    let mut docs = Vec::new();
    for p in inputs {
        docs.extend(read_all(p, input_format(g, p)?).map_err(stage("ingest"))?);
    }
    Ok(docs)
}

fn write_report(g: &GlobalArgs, body: &str) -> Result<(), CliError> {
    match &g.report {
        Some(p) => fs::write(p, body).map_err(stage("output")),
        None => Ok(()),
    }
}

fn summary_line(input: CorpusStats, kept: CorpusStats) -> String {
    let s = |c: CorpusStats| json!({ "documents": c.documents, "sentences": c.sentences, "words": c.words });
    format!("{}\n", json!({ "record": "summary", "input": s(input), "kept": s(kept) }))
}

/// Streams documents through a pure per-document step in parallel chunks,
/// writing survivors and drop records in input order.
fn transform<F>(g: &GlobalArgs, io: &DocIo, stage_name: &'static str, step: F) -> Result<(), CliError>
where
    F: Fn(Document) -> Result<Document, DropReason> + Sync,
{
    let mut writer = DocumentWriter::create(&io.output, output_format(&io.output)).map_err(stage("output"))?;
    let (mut input, mut kept) = (CorpusStats::default(), CorpusStats::default());
    let mut report = String::new();
    for path in &io.inputs {
        let mut reader = read_documents(path, input_format(g, path)?).map_err(stage("ingest"))?;
        loop {
            let chunk: Vec<Document> = reader
                .by_ref()
                .take(CHUNK)
                .collect::<Result<_, _>>()
                .map_err(stage("ingest"))?;
            if chunk.is_empty() {
                break;
            }
            let results: Vec<(String, CorpusStats, Result<Document, DropReason>)> = chunk
                .into_par_iter()
                .map(|d| (d.id.clone(), CorpusStats::of(&d), step(d)))
                .collect();
            for (id, stats, result) in results {
                input += stats;
                match result {
                    Ok(doc) => {
                        kept.observe(&doc);
                        writer.write(&doc).map_err(stage("output"))?;
                    }
                    Err(reason) => {
                        let rec = DropRecord {
                            id,
                            stage: stage_name.to_string(),
                            reason,
                        };
                        report.push_str(&format!("{}\n", rec.to_json()));
                    }
                }
            }
        }
    }
    writer.finish().map_err(stage("output"))?;
    print!("{}", stats_table(&[("Input", input), ("Output", kept)]));
    report.push_str(&summary_line(input, kept));
    write_report(g, &report)
}

fn cmd_stats(g: &GlobalArgs, inputs: &[PathBuf]) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut report = String::new();
    for p in inputs {
        let mut stats = CorpusStats::default();
        for doc in read_documents(p, input_format(g, p)?).map_err(stage("ingest"))? {
            stats.observe(&doc.map_err(stage("ingest"))?);
        }
        report.push_str(&format!(
            "{}\n",
            json!({ "record": "stats", "path": p.display().to_string(),
                    "documents": stats.documents, "sentences": stats.sentences, "words": stats.words })
        ));
        rows.push((p.display().to_string(), stats));
    }
    let total: CorpusStats = rows.iter().map(|r| r.1).sum();
    rows.push(("Total".into(), total));
    let table_rows: Vec<(&str, CorpusStats)> = rows.iter().map(|(l, s)| (l.as_str(), *s)).collect();
    print!("{}", stats_table(&table_rows));
    write_report(g, &report)
}

fn cmd_dedup(g: &GlobalArgs, io: &DocIo) -> Result<(), CliError> {
    let mut writer = DocumentWriter::create(&io.output, output_format(&io.output)).map_err(stage("output"))?;
    let mut seen = Deduplicator::new();
    let (mut input, mut kept) = (CorpusStats::default(), CorpusStats::default());
    let mut report = String::new();
    for path in &io.inputs {
        for doc in read_documents(path, input_format(g, path)?).map_err(stage("ingest"))? {
            let doc = doc.map_err(stage("ingest"))?;
            input.observe(&doc);
            let key = dedup_key(&doc.text);
            if seen.insert(key) {
                kept.observe(&doc);
                writer.write(&doc).map_err(stage("output"))?;
            } else {
                let rec = DropRecord {
                    id: doc.id.clone(),
                    stage: "dedup".into(),
                    reason: DropReason::Duplicate(key),
                };
                report.push_str(&format!("{}\n", rec.to_json()));
            }
        }
    }
    writer.finish().map_err(stage("output"))?;
    print!("{}", stats_table(&[("Input", input), ("Output", kept)]));
    report.push_str(&summary_line(input, kept));
    write_report(g, &report)
}

fn cmd_bpe_train(g: &GlobalArgs, inputs: &[PathBuf], output: &Path, vocab_size: usize) -> Result<(), CliError> {
    let mut counts = WordCounts::new();
    for p in inputs {
        for doc in read_documents(p, input_format(g, p)?).map_err(stage("ingest"))? {
            counts.add_text(&doc.map_err(stage("ingest"))?.text);
        }
    }
    let vocab = train_from_counts(&counts, vocab_size).map_err(|e| match e {
        crate::bpe::BpeError::VocabSizeTooSmall { .. } => CliError::Invalid(e.to_string()),
        other => CliError::Stage(StageError::new("vocab", other)),
    })?;
    vocab.save(output).map_err(stage("vocab"))?;
    println!(
        "{} pieces ({} specials, {} alphabet, {} merges) written to {}",
        vocab.len(),
        crate::bpe::SPECIALS.len(),
        vocab.alphabet_len(),
        vocab.merges().len(),
        output.display()
    );
    write_report(
        g,
        &format!(
            "{}\n",
            json!({ "record": "vocab", "pieces": vocab.len(), "merges": vocab.merges().len(), "alphabet": vocab.alphabet_len() })
        ),
    )
}

fn cmd_bpe_encode(g: &GlobalArgs, inputs: &[PathBuf], vocab: &Path, pieces: bool) -> Result<(), CliError> {
    let vocab = Vocab::load(vocab).map_err(stage("vocab"))?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for p in inputs {
        for doc in read_documents(p, input_format(g, p)?).map_err(stage("ingest"))? {
            let doc = doc.map_err(stage("ingest"))?;
            for sentence in doc.sentences() {
                let line = if pieces {
                    vocab.encode_pieces(sentence).join(" ")
                } else {
                    vocab.encode(sentence).iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
                };
                writeln!(out, "{line}").map_err(stage("output"))?;
            }
        }
    }
    out.flush().map_err(stage("output"))
}

fn cmd_make_examples(
    g: &GlobalArgs,
    inputs: &[PathBuf],
    vocab: &Path,
    output: &Path,
    gen: &GenArgs,
) -> Result<(), CliError> {
    let generation = GenerationConfig {
        max_seq_length: gen.max_seq_length,
        masked_lm_prob: gen.masked_lm_prob,
        random_next_prob: gen.random_next_prob,
        short_seq_prob: gen.short_seq_prob,
        dupe_factor: gen.dupe_factor,
        shards: gen.shards,
        seed: g.seed.unwrap_or(GenerationConfig::default().seed),
    };
    generation.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
    let vocab = Vocab::load(vocab).map_err(stage("vocab"))?;
    let docs = read_inputs(g, inputs)?;
    let config = PipelineConfig {
        generation,
        ..PipelineConfig::default()
    };
    let summary = write_examples(&docs, &vocab, &config, output).map_err(stage("examples"))?;
    println!(
        "{} examples ({} random-next) in {} shards: {:?}",
        summary.total,
        summary.random_next,
        summary.shard_sizes.len(),
        summary.shard_sizes
    );
    write_report(
        g,
        &format!(
            "{}\n",
            json!({ "record": "examples", "total": summary.total, "random_next": summary.random_next, "shard_sizes": summary.shard_sizes })
        ),
    )
}

fn cmd_read_examples(shards: &[PathBuf], limit: Option<usize>) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for ex in read_tfrecords(shards).take(limit.unwrap_or(usize::MAX)) {
        let ex = ex.map_err(stage("read-examples"))?;
        let line = json!({
            "input_ids": ex.input_ids,
            "input_mask": ex.input_mask,
            "segment_ids": ex.segment_ids,
            "masked_lm_positions": ex.masked_lm_positions,
            "masked_lm_ids": ex.masked_lm_ids,
            "masked_lm_weights": ex.masked_lm_weights,
            "next_sentence_labels": ex.next_sentence_labels,
        });
        writeln!(out, "{line}").map_err(stage("output"))?;
    }
    out.flush().map_err(stage("output"))
}

fn cmd_run(
    g: &GlobalArgs,
    config_path: Option<&Path>,
    inputs: &[PathBuf],
    output: Option<&Path>,
    overrides: &[String],
) -> Result<(), CliError> {
    let mut config = match config_path {
        Some(p) => {
            let src = fs::read_to_string(p)
                .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", p.display())))?;
            parse_config(&src).map_err(CliError::Config)?
        }
        None => PipelineConfig::default(),
    };
    let mut diags = Vec::new();
    for o in overrides {
        if let Err(d) = config.apply_override(o) {
            diags.push(d);
        }
    }
    if !inputs.is_empty() {
        config.inputs = inputs.to_vec();
    }
    if let Some(o) = output {
        config.output_dir = o.to_path_buf();
    }
    if let Some(f) = g.format {
        config.format = Some(f);
    }
    if let Some(s) = g.seed {
        config.generation.seed = s;
    }
    if let Some(r) = &g.report {
        config.report_path = Some(r.clone());
    }
    diags.extend(config.validate());
    if !diags.is_empty() {
        return Err(CliError::Config(diags));
    }
    let report = run_pipeline(&config)?;
    print!("{}", report.table());
    Ok(())
}
