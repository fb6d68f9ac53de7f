#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use bertprep::cli::{run_pipeline, PipelineConfig, PipelineReport, StageError};
use bertprep::ingest::write_documents;
use bertprep::{Document, Format};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixtures").join(name)
}

const ESTONIAN: &[&str] = &[
    "Eesti on väike riik Läänemere ääres.",
    "Pealinn Tallinn asub põhjarannikul ja seal elab palju inimesi.",
    "Täna hommikul sadas vihma ja tuul oli tugev.",
    "Lapsed jäid koju ning mängisid terve päeva lauamänge.",
    "See on Eesti vanim ülikool ning seal õpib palju tudengeid.",
    "Ma ei tea, kas ta tuleb homme või mitte.",
    "Me läksime metsa ja korjasime seal seeni ning marju.",
    "Kui ilm on ilus, siis on see hea päev jalutamiseks.",
    "Raamatukogu on avatud iga päev kella kümnest kuueni.",
    "Ta ütles, et see on tema jaoks väga oluline küsimus.",
    "Nad elavad maal ja neil on suur aed ning palju loomi.",
    "Ka see töö on tehtud ning nüüd on aeg puhata.",
];

const ENGLISH: &str = "The weather in London was cold and wet this morning and most people stayed at home.";

/// A mixed corpus: Estonian documents, some with markup, case-variant
/// duplicates, English documents and very short documents.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs: Vec<Document> = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("s{i:06}");
        let roll: f64 = rng.gen();
        let doc = if roll < 0.05 && !docs.is_empty() {
            let src = &docs[rng.gen_range(0..docs.len())];
            Document::new(id, src.text.to_uppercase())
        } else if roll < 0.08 {
            Document::new(id, format!("{ENGLISH}\n{ENGLISH}"))
        } else if roll < 0.10 {
            Document::new(id, "Tere, kuidas läheb?")
        } else {
            let k = rng.gen_range(2..=6);
            let mut sents: Vec<String> = (0..k)
                .map(|_| ESTONIAN.choose(&mut rng).unwrap().to_string())
                .collect();
            sents.push(format!("Dokumendi number on {i}."));
            if rng.gen_bool(0.2) {
                sents[0] = format!("<p>{}</p>", sents[0]);
            }
            Document::new(id, sents.join("\n")).with_lang("et")
        };
        docs.push(doc);
    }
    docs
}

pub fn write_corpus(dir: &Path, docs: &[Document]) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    write_documents(docs, &path, Format::JsonLines).unwrap();
    path
}

pub fn small_config(input: &Path, out: &Path) -> PipelineConfig {
    let mut config = PipelineConfig {
        inputs: vec![input.to_path_buf()],
        output_dir: out.to_path_buf(),
        vocab_size: 400,
        ..Default::default()
    };
    config.stages.truecase = false;
    config.generation.dupe_factor = 2;
    config
}

pub fn run_with_workers(config: &PipelineConfig, workers: usize) -> Result<PipelineReport, StageError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .unwrap()
        .install(|| run_pipeline(config))
}

/// Every regular file under `dir`, sorted by name, with its bytes.
pub fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}
