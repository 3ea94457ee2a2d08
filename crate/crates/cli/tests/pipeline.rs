mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use commedia_cli::report::read_manifest;
use commedia_cli::{run_stage, Pipeline, Stage};
use common::{fast_config, write_config, write_corpus};

/// Every report file (cache excluded) keyed by name.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

const EXPECTED: [&str; 27] = [
    "anchors.json",
    "class_sw.csv",
    "class_trends.csv",
    "contexts.txt",
    "corpus_summary.csv",
    "events.csv",
    "fig2.csv",
    "fig3.csv",
    "fig4.csv",
    "fig5b.csv",
    "fig7b.csv",
    "fig8.csv",
    "ingest.json",
    "manifest.json",
    "markov.csv",
    "probes.csv",
    "progression.json",
    "runs.csv",
    "sensitivity.csv",
    "stopwords.json",
    "symbols.csv",
    "table3.csv",
    "table4.json",
    "table5.csv",
    "tokens.csv",
    "trends.csv",
    "trigrams.csv",
];

#[test]
fn all_is_deterministic_and_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path(), 5, 24);
    let out = tmp.path().join("out");
    let cfg = fast_config(&corpus, &out);

    run_stage(&mut Pipeline::new(cfg.clone()), Stage::All).unwrap();
    let first = snapshot(&out);
    assert_eq!(first.keys().map(String::as_str).collect::<Vec<_>>(), EXPECTED);

    // Rerun against a warm cache: outputs unchanged.
    run_stage(&mut Pipeline::new(cfg.clone()), Stage::All).unwrap();
    assert_eq!(snapshot(&out), first);

    // Recompute from scratch: outputs unchanged.
    fs::remove_dir_all(&out).unwrap();
    run_stage(&mut Pipeline::new(cfg), Stage::All).unwrap();
    assert_eq!(snapshot(&out), first);
}

#[test]
fn staged_runs_equal_all() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path(), 4, 20);
    let all_dir = tmp.path().join("all");
    let staged_dir = tmp.path().join("staged");
    run_stage(&mut Pipeline::new(fast_config(&corpus, &all_dir)), Stage::All).unwrap();
    for s in Stage::EACH {
        run_stage(&mut Pipeline::new(fast_config(&corpus, &staged_dir)), s).unwrap();
    }
    assert_eq!(snapshot(&staged_dir), snapshot(&all_dir));
}

#[test]
fn markov_after_encode_reuses_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path(), 3, 15);
    let out = tmp.path().join("out");
    let cfg_path = write_config(tmp.path(), &fast_config(&corpus, &out));
    let bin = env!("CARGO_BIN_EXE_commedia");

    let encode = Command::new(bin).args(["encode", "--config"]).arg(&cfg_path).output().unwrap();
    assert!(encode.status.success(), "{}", String::from_utf8_lossy(&encode.stderr));
    let encode_key = read_manifest(&out).unwrap().stages["encode"].clone();

    let markov = Command::new(bin).args(["markov", "--config"]).arg(&cfg_path).output().unwrap();
    assert!(markov.status.success());
    let log = String::from_utf8_lossy(&markov.stderr);
    for stage in ["ingest", "tokenize", "encode"] {
        assert!(log.contains(&format!("{stage}: cache hit")), "{stage} recomputed:\n{log}");
    }
    assert!(log.contains("markov: computing"));
    let manifest = read_manifest(&out).unwrap();
    assert_eq!(manifest.stages["encode"], encode_key);
    assert!(manifest.stages.contains_key("markov"));
    assert_eq!(manifest.seed, 20240611);

    // A changed markov section invalidates markov only.
    let mut cfg = fast_config(&corpus, &out);
    cfg.markov.rescale_b = 2.0;
    let cfg_path = write_config(tmp.path(), &cfg);
    let rerun = Command::new(bin).args(["markov", "--config"]).arg(&cfg_path).output().unwrap();
    let log = String::from_utf8_lossy(&rerun.stderr);
    assert!(log.contains("encode: cache hit") && log.contains("markov: computing"), "{log}");
}

#[test]
fn missing_corpus_exits_with_status_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere").join("commedia.json");
    let out = Command::new(env!("CARGO_BIN_EXE_commedia"))
        .args(["ingest", "--corpus"])
        .arg(&missing)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(&missing.display().to_string()));
}

#[test]
fn failing_stage_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("bad.json");
    fs::write(&corpus, r#"[{"name": "Inferno", "cantos": []}]"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_commedia"))
        .args(["ingest", "--corpus"])
        .arg(&corpus)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage ingest failed"));
}
