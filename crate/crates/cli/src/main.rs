use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use commedia_cli::report::StageFailed;
use commedia_cli::{run_stage, MissingInput, Pipeline, RunConfig, Stage};

/// Vowel/consonant dependency, graphemic probe and lexical classification
/// pipeline over a cantica/canto/verse corpus.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// Stage to run; upstream stages are computed or loaded from cache.
    #[arg(value_enum)]
    stage: Stage,
    /// TOML configuration file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    patches: Option<PathBuf>,
    /// Apostrophe rule file (JSON).
    #[arg(long, global = true)]
    rules: Option<PathBuf>,
    /// Stopword list (JSON); generated from the corpus when absent.
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo validation runs.
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

impl Cli {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.corpus {
            cfg.corpus.path = v.clone();
        }
        if let Some(v) = &self.patches {
            cfg.corpus.patches = Some(v.clone());
        }
        if let Some(v) = &self.rules {
            cfg.tokenizer.rules = Some(v.clone());
        }
        if let Some(v) = &self.stopwords {
            cfg.tokenizer.stopwords = Some(v.clone());
        }
        if let Some(v) = &self.out {
            cfg.output.dir = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.classify.seed = v;
        }
        if let Some(v) = self.runs {
            cfg.classify.runs = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut pipeline = Pipeline::new(cli.config()?);
    run_stage(&mut pipeline, cli.stage)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(m) = e.downcast_ref::<MissingInput>() {
                eprintln!("error: {m}");
                return ExitCode::from(2);
            }
            match e.downcast_ref::<StageFailed>() {
                Some(s) => eprintln!("error: {s}: {:#}", e.root_cause()),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::FAILURE
        }
    }
}
