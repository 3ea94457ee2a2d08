//! Report files written by each stage, and the run manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use commedia_core::anchors::write_anchors_csv;
use commedia_core::classify::{write_confusion_csv, write_progression_csv, write_runs_csv, write_top_terms_csv};
use commedia_core::markov::write_markov_csv;
use commedia_core::probes::{write_class_trends_csv, write_probes_csv};
use commedia_core::tokenizer::{write_events_csv, write_tokens_csv};
use commedia_core::vc::{trigram_scan, write_symbols_csv, write_trigrams_csv, ScanOptions, Symbol};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::write_stat_rows;
use crate::pipeline::{Pipeline, VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Stage {
    Ingest,
    Tokenize,
    Encode,
    Markov,
    Trends,
    Probes,
    Classify,
    Anchors,
    All,
}

impl Stage {
    pub const EACH: [Stage; 8] = [
        Stage::Ingest,
        Stage::Tokenize,
        Stage::Encode,
        Stage::Markov,
        Stage::Trends,
        Stage::Probes,
        Stage::Classify,
        Stage::Anchors,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Tokenize => "tokenize",
            Stage::Encode => "encode",
            Stage::Markov => "markov",
            Stage::Trends => "trends",
            Stage::Probes => "probes",
            Stage::Classify => "classify",
            Stage::Anchors => "anchors",
            Stage::All => "all",
        }
    }
}

/// Error wrapper naming the stage that failed.
#[derive(Debug)]
pub struct StageFailed(pub &'static str);

impl std::fmt::Display for StageFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {} failed", self.0)
    }
}

impl std::error::Error for StageFailed {}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn csv_rows<I, R>(dir: &Path, name: &str, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

/// Runs one stage (or all of them) and writes its reports into the output
/// directory, then updates the manifest. Errors carry [`StageFailed`].
pub fn run_stage(p: &mut Pipeline, stage: Stage) -> Result<()> {
    let stages: Vec<Stage> = if stage == Stage::All { Stage::EACH.to_vec() } else { vec![stage] };
    let dir = p.config.output.dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for s in stages {
        write_stage(p, s, &dir).context(StageFailed(s.name()))?;
    }
    write_manifest(p, &dir)
}

fn write_stage(p: &mut Pipeline, stage: Stage, dir: &Path) -> Result<()> {
    match stage {
        Stage::Ingest => {
            let ing = p.ingest()?;
            let d = &ing.doc;
            csv_rows(
                dir,
                "corpus_summary.csv",
                &["global_index", "cantica", "canto", "verses"],
                d.cantos()
                    .map(|c| vec![c.global_index.to_string(), c.cantica.clone(), c.number.to_string(), c.verses.len().to_string()]),
            )?;
            write_json(
                dir,
                "ingest.json",
                &json!({
                    "source_id": d.source_id,
                    "cantiche": d.cantica_names(),
                    "cantos": d.canto_count(),
                    "verses": d.verse_count(),
                    "patch_log": d.patch_log,
                }),
            )
        }
        Stage::Tokenize => {
            let ing = p.ingest()?;
            let tok = p.tokenize()?;
            write_tokens_csv(create(dir, "tokens.csv")?, &tok.cantos)?;
            write_events_csv(create(dir, "events.csv")?, &tok.cantos)?;
            csv_rows(
                dir,
                "fig2.csv",
                &[
                    "global_index",
                    "cantica",
                    "canto",
                    "apostrophe_rate_per_100",
                    "mean_token_length",
                    "token_count",
                    "apostrophe_tokens",
                    "combined_tokens",
                    "isolated_events",
                ],
                ing.doc.cantos().zip(&tok.stats).map(|(c, s)| {
                    vec![
                        s.canto.to_string(),
                        c.cantica.clone(),
                        c.number.to_string(),
                        f6(s.apostrophe_rate_per_100),
                        f6(s.mean_token_length),
                        s.token_count.to_string(),
                        s.apostrophe_tokens.to_string(),
                        s.combined_tokens.to_string(),
                        s.isolated_events.to_string(),
                    ]
                }),
            )?;
            let mut w = create(dir, "stopwords.json")?;
            w.write_all(tok.stopwords.to_json().as_bytes())?;
            w.write_all(b"\n")?;
            w.flush()?;
            Ok(())
        }
        Stage::Encode => {
            let ing = p.ingest()?;
            let tok = p.tokenize()?;
            let enc = p.encode()?;
            csv_rows(
                dir,
                "fig3.csv",
                &["global_index", "cantica", "canto", "alphabetic_chars", "vowels", "consonants"],
                ing.doc.cantos().zip(&tok.stats).zip(&enc.sequences).map(|((c, s), seq)| {
                    let v = seq.symbols.iter().filter(|&&x| x == Symbol::V).count();
                    vec![
                        c.global_index.to_string(),
                        c.cantica.clone(),
                        c.number.to_string(),
                        s.alphabetic_chars.to_string(),
                        v.to_string(),
                        (seq.len() - v).to_string(),
                    ]
                }),
            )?;
            write_symbols_csv(create(dir, "symbols.csv")?, &enc.sequences)?;
            let opts = ScanOptions {
                cross_verses: p.config.encoding.cross_verses,
            };
            let occ: Vec<_> = enc.sequences.iter().flat_map(|s| trigram_scan(s, opts)).collect();
            write_trigrams_csv(create(dir, "trigrams.csv")?, &occ)?;
            Ok(())
        }
        Stage::Markov => {
            let mk = p.markov()?;
            write_markov_csv(create(dir, "markov.csv")?, &mk.rows)?;
            csv_rows(
                dir,
                "fig4.csv",
                &["global_index", "cantica", "md_simple", "md"],
                mk.rows.iter().map(|r| vec![r.global_index.to_string(), r.cantica.clone(), f6(r.index.md_simple), f6(r.index.md)]),
            )
        }
        Stage::Trends => {
            let t = p.trends()?;
            write_stat_rows(create(dir, "trends.csv")?, &t.rows)?;
            write_stat_rows(create(dir, "sensitivity.csv")?, &t.sensitivity)
        }
        Stage::Probes => {
            let pr = p.probes()?;
            write_probes_csv(create(dir, "probes.csv")?, &pr.records)?;
            let retained: Vec<_> = pr.retained().cloned().collect();
            write_probes_csv(create(dir, "table3.csv")?, &retained)?;
            write_class_trends_csv(create(dir, "class_trends.csv")?, &pr.class_trends)?;
            csv_rows(
                dir,
                "class_sw.csv",
                &["class", "sw_pct"],
                pr.class_sw.iter().map(|(c, v)| vec![c.as_str().to_string(), format!("{v:.2}")]),
            )?;
            let mut w = create(dir, "contexts.txt")?;
            for c in &pr.contexts {
                writeln!(w, "[{}]", c.letters)?;
                for line in &c.contexts {
                    writeln!(w, "{line}")?;
                }
                writeln!(w)?;
            }
            w.flush()?;
            Ok(())
        }
        Stage::Classify => {
            let cl = p.classify()?;
            let r = &cl.report;
            let metric = |m: &commedia_core::classify::Metrics| {
                json!({"accuracy": m.accuracy, "balanced_accuracy": m.balanced_accuracy, "macro_f1": m.macro_f1, "mcc": m.mcc})
            };
            write_json(
                dir,
                "table4.json",
                &json!({
                    "runs": r.runs.len(),
                    "seed": p.config.classify.seed,
                    "mean": metric(&r.mean),
                    "sd": metric(&r.sd),
                    "non_converged_runs": r.non_converged_runs,
                    "term_rankings_from": "full-data fit",
                    "full_fit": {
                        "lambda": cl.full.tuning.lambda,
                        "alpha": cl.full.tuning.alpha,
                        "cv_accuracy": cl.full.tuning.cv_accuracy,
                        "vocabulary_size": cl.full.dtm.vocabulary.len(),
                    },
                }),
            )?;
            write_runs_csv(create(dir, "runs.csv")?, r)?;
            write_confusion_csv(create(dir, "fig5b.csv")?, r, &cl.class_names)?;
            write_top_terms_csv(create(dir, "table5.csv")?, &cl.ranking, &cl.class_names)?;
            match &cl.progression {
                Some(prog) => {
                    write_progression_csv(create(dir, "fig7b.csv")?, prog)?;
                    write_json(dir, "progression.json", prog)
                }
                None => {
                    log::warn!("progression needs exactly three classes; fig7b.csv not written");
                    Ok(())
                }
            }
        }
        Stage::Anchors => {
            let a = p.anchors()?;
            write_anchors_csv(create(dir, "fig8.csv")?, &a.records)?;
            write_json(dir, "anchors.json", &*a)
        }
        Stage::All => unreachable!("expanded by run_stage"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Cache key of every stage whose outputs are present.
    pub stages: BTreeMap<String, String>,
}

/// Hash of the analysis configuration; the output location is excluded.
pub fn config_hash(p: &Pipeline) -> String {
    let mut cfg = p.config.clone();
    cfg.output = Default::default();
    hex::encode(Sha256::digest(serde_json::to_vec(&cfg).expect("config serializes")))
}

/// Merges this run's stage keys into an existing manifest for the same
/// configuration, so staged runs and `all` produce the same file.
fn write_manifest(p: &Pipeline, dir: &Path) -> Result<()> {
    let path = dir.join("manifest.json");
    let hash = config_hash(p);
    let mut stages = fs::read(&path)
        .ok()
        .and_then(|b| serde_json::from_slice::<Manifest>(&b).ok())
        .filter(|m| m.config_hash == hash && m.version == VERSION)
        .map(|m| m.stages)
        .unwrap_or_default();
    for (k, v) in p.keys() {
        stages.insert(k.to_string(), v.clone());
    }
    write_json(
        dir,
        "manifest.json",
        &Manifest {
            version: VERSION.to_string(),
            seed: p.config.classify.seed,
            config_hash: hash,
            stages,
        },
    )
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    Ok(serde_json::from_slice(&fs::read(&path).with_context(|| format!("reading {}", path.display()))?)?)
}
