mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn bertprep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bertprep")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_version_succeed() {
    for args in [&["--help"][..], &["--version"], &["run", "--help"]] {
        let o = bertprep(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}");
        assert!(!stdout(&o).is_empty());
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(bertprep(&[]).status.code(), Some(1));
    assert_eq!(bertprep(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bertprep(&["--workers", "many", "stats", "x"]).status.code(), Some(1));
}

#[test]
fn bad_config_exits_one_with_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(&cfg, "[input]\npaths = corpus.jsonl\n[examples]\nmaxseq = 128\nshards = lots\n").unwrap();
    let o = bertprep(&["run", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 4"), "{err}");
    assert!(err.contains("did you mean \"max_seq_length\""), "{err}");
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let o = bertprep(&["run", "--input", p(&missing), "-o", p(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ingest stage"), "{}", stderr(&o));

    let o = bertprep(&["stats", p(&missing)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn workers_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_corpus(dir.path(), &synthetic_corpus(1500, 7));
    let mut outputs = Vec::new();
    for workers in ["1", "4"] {
        let out = dir.path().join(format!("w{workers}"));
        let o = bertprep(&[
            "--workers",
            workers,
            "--seed",
            "99",
            "run",
            "--input",
            p(&input),
            "-o",
            p(&out),
            "--set",
            "vocab.vocab_size=300",
            "--set",
            "stages.truecase=false",
            "--set",
            "examples.dupe_factor=2",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push(dir_contents(&out));
    }
    assert!(outputs[0].len() >= 8);
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn score_ner_matches_golden_report() {
    let o = bertprep(&["score-ner", p(&fixture("ner.conll"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), fs::read_to_string(fixture("ner.conlleval.txt")).unwrap());
}

#[test]
fn score_tags_and_cls() {
    let o = bertprep(&["score-tags", p(&fixture("pos.conll"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("77.78"), "{}", stdout(&o));

    let o = bertprep(&["score-cls", p(&fixture("sentiment.tsv"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("75.00"), "{}", stdout(&o));
}

#[test]
fn stepwise_commands_compose() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = write_corpus(d, &synthetic_corpus(120, 8));
    let run = |args: &[&str]| {
        let o = bertprep(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        o
    };
    run(&["clean", p(&input), "-o", p(&d.join("a.jsonl"))]);
    run(&["dedup", p(&d.join("a.jsonl")), "-o", p(&d.join("b.jsonl"))]);
    run(&["filter", p(&d.join("b.jsonl")), "-o", p(&d.join("c.jsonl"))]);
    run(&["bpe-train", p(&d.join("c.jsonl")), "-o", p(&d.join("v")), "--vocab-size", "200"]);
    let enc = run(&["bpe-encode", p(&d.join("c.jsonl")), "--vocab", p(&d.join("v")), "--pieces"]);
    assert!(stdout(&enc).contains('▁'));
    run(&[
        "make-examples",
        p(&d.join("c.jsonl")),
        "--vocab",
        p(&d.join("v")),
        "-o",
        p(&d.join("ex")),
        "--dupe-factor",
        "1",
    ]);
    let shard = d.join("ex/pretrain-0-of-4.tfrecord");
    let read = run(&["read-examples", p(&shard), "--limit", "2"]);
    let text = stdout(&read);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(v["input_ids"].as_array().unwrap().len(), 128);

    let stats = run(&["stats", p(&input), p(&d.join("c.jsonl"))]);
    assert!(stdout(&stats).contains("Documents"));
}
