//! Synthetic three-cantica corpus and a fast configuration for pipeline tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use commedia_cli::RunConfig;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const SHARED: &[&str] = &[
    "e", "che", "la", "di", "il", "non", "per", "si", "a", "in", "mi", "con", "io", "lo", "ma", "come", "piu", "se", "quando", "poi",
];
const ELIDED: &[&str] = &["l'altro", "ch'io", "s'io", "l'un", "d'amore", "tant'era", "com'i'", "m'apparve", "v'intrai", "quell'ombra"];
const THEMES: [&[&str]; 3] = [
    &["maestro", "pena", "fuoco", "dannati", "selva", "fiera", "duca", "grida", "tormento", "palude", "ghiaccio", "demonio"],
    &["monte", "anime", "cornice", "pianto", "ombra", "preghiera", "salita", "purgare", "riva", "costa", "sasso", "pietade"],
    &["luce", "stella", "beata", "cielo", "gloria", "lume", "splendore", "amore", "letizia", "sole", "ardore", "sereno"],
];
pub const NAMES: [&str; 3] = ["Inferno", "Purgatorio", "Paradiso"];

/// Deterministic corpus with `cantos` cantos per cantica. Thematic words
/// dominate each cantica; elided forms thin out along reading order.
pub fn synthetic_corpus_json(cantos: usize, verses: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = 3 * cantos;
    let cantiche: Vec<_> = (0..3)
        .map(|c| {
            let list: Vec<_> = (0..cantos)
                .map(|k| {
                    let position = (c * cantos + k) as f64 / total as f64;
                    let lines: Vec<String> = (0..verses)
                        .map(|_| {
                            let words: Vec<&str> = (0..7)
                                .map(|_| {
                                    let u: f64 = rng.random();
                                    if u < 0.12 * (1.0 - 0.7 * position) {
                                        *ELIDED.choose(&mut rng).unwrap()
                                    } else if u < 0.5 {
                                        *THEMES[c].choose(&mut rng).unwrap()
                                    } else if u < 0.55 {
                                        *THEMES[(c + 1) % 3].choose(&mut rng).unwrap()
                                    } else {
                                        *SHARED.choose(&mut rng).unwrap()
                                    }
                                })
                                .collect();
                            let mut line = words.join(" ");
                            line[..1].make_ascii_uppercase();
                            line
                        })
                        .collect();
                    json!({"number": k + 1, "verses": lines})
                })
                .collect();
            json!({"name": NAMES[c], "cantos": list})
        })
        .collect();
    serde_json::to_string_pretty(&cantiche).unwrap()
}

pub fn write_corpus(dir: &Path, cantos: usize, verses: usize) -> PathBuf {
    let path = dir.join("corpus.json");
    std::fs::write(&path, synthetic_corpus_json(cantos, verses, 7)).unwrap();
    path
}

/// Small grid and few runs so the whole pipeline finishes in seconds.
pub fn fast_config(corpus: &Path, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.corpus.path = corpus.to_path_buf();
    cfg.corpus.profile = commedia_cli::config::ProfileName::Tripartite;
    cfg.tokenizer.stopword_top_k = 10;
    cfg.tokenizer.stopword_min_dispersion = 1;
    cfg.probes.min_support = 5;
    cfg.classify.runs = 3;
    cfg.classify.lambdas = vec![1e-2, 1e-1];
    cfg.classify.alphas = vec![0.5, 1.0];
    cfg.classify.inner_folds = 3;
    cfg.classify.max_iter = 2000;
    cfg.classify.tol = 1e-6;
    cfg.output.dir = out.to_path_buf();
    cfg
}

pub fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, toml::to_string(cfg).unwrap()).unwrap();
    path
}
