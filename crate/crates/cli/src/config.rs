//! Run configuration: TOML file, defaults, and command-line overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use commedia_core::classify::{DtmParams, FitOptions, Grid, McParams};
use commedia_core::corpus::CorpusProfile;
use commedia_core::markov::Rescale;
use commedia_core::probes::ScreenParams;
use commedia_core::tokenizer::StopwordParams;
use serde::{Deserialize, Serialize};

use crate::MissingInput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    #[default]
    Commedia,
    Tripartite,
    Any,
}

impl ProfileName {
    pub fn profile(self) -> CorpusProfile {
        match self {
            ProfileName::Commedia => CorpusProfile::commedia(),
            ProfileName::Tripartite => CorpusProfile::tripartite(),
            ProfileName::Any => CorpusProfile::any(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub path: PathBuf,
    pub patches: Option<PathBuf>,
    pub profile: ProfileName,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            path: PathBuf::from("data/commedia.json"),
            patches: None,
            profile: ProfileName::Commedia,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    /// JSON rule file; built-in lists when absent.
    pub rules: Option<PathBuf>,
    /// JSON stopword list; generated from the corpus when absent.
    pub stopwords: Option<PathBuf>,
    pub stopword_top_k: usize,
    pub stopword_min_dispersion: usize,
    pub stopword_keep: BTreeSet<String>,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        let d = StopwordParams::default();
        TokenizerSection {
            rules: None,
            stopwords: None,
            stopword_top_k: d.top_k,
            stopword_min_dispersion: d.min_canto_dispersion,
            stopword_keep: d.keep_exceptions,
        }
    }
}

impl TokenizerSection {
    pub fn stopword_params(&self) -> StopwordParams {
        StopwordParams {
            top_k: self.stopword_top_k,
            min_canto_dispersion: self.stopword_min_dispersion,
            keep_exceptions: self.stopword_keep.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingSection {
    /// Full vowel inventory (lowercase); the built-in table when absent.
    pub vowels: Option<String>,
    pub cross_verses: bool,
}

impl Default for EncodingSection {
    fn default() -> Self {
        EncodingSection {
            vowels: None,
            cross_verses: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkovSection {
    pub rescale_a: f64,
    pub rescale_b: f64,
}

impl Default for MarkovSection {
    fn default() -> Self {
        let r = Rescale::default();
        MarkovSection {
            rescale_a: r.a,
            rescale_b: r.b,
        }
    }
}

impl MarkovSection {
    pub fn rescale(&self) -> Rescale {
        Rescale {
            a: self.rescale_a,
            b: self.rescale_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbesSection {
    pub min_support: u64,
    pub alpha: f64,
    pub context_window: usize,
    pub contexts_per_probe: usize,
}

impl Default for ProbesSection {
    fn default() -> Self {
        let d = ScreenParams::default();
        ProbesSection {
            min_support: d.min_support,
            alpha: d.alpha,
            context_window: 2,
            contexts_per_probe: 5,
        }
    }
}

impl ProbesSection {
    pub fn screen(&self) -> ScreenParams {
        ScreenParams {
            min_support: self.min_support,
            alpha: self.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub seed: u64,
    pub runs: usize,
    pub test_fraction: f64,
    pub inner_folds: usize,
    pub top_k: usize,
    pub min_len: usize,
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub max_iter: usize,
    pub tol: f64,
    pub top_terms: usize,
}

impl Default for ClassifySection {
    fn default() -> Self {
        let mc = McParams::default();
        ClassifySection {
            seed: mc.seed,
            runs: mc.runs,
            test_fraction: mc.test_fraction,
            inner_folds: mc.inner_folds,
            top_k: mc.dtm.top_k,
            min_len: mc.dtm.min_len,
            lambdas: mc.grid.lambdas,
            alphas: mc.grid.alphas,
            max_iter: mc.fit.max_iter,
            tol: mc.fit.tol,
            top_terms: 30,
        }
    }
}

impl ClassifySection {
    pub fn mc_params(&self) -> McParams {
        McParams {
            runs: self.runs,
            test_fraction: self.test_fraction,
            seed: self.seed,
            grid: Grid {
                lambdas: self.lambdas.clone(),
                alphas: self.alphas.clone(),
            },
            inner_folds: self.inner_folds,
            dtm: DtmParams {
                top_k: self.top_k,
                min_len: self.min_len,
            },
            fit: FitOptions {
                max_iter: self.max_iter,
                tol: self.tol,
                record_history: false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    pub tokenizer: TokenizerSection,
    pub encoding: EncodingSection,
    pub markov: MarkovSection,
    pub probes: ProbesSection,
    pub classify: ClassifySection,
    pub output: OutputSection,
}

impl RunConfig {
    /// Reads a TOML file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(MissingInput(path.to_path_buf()).into());
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.path);
        if let Some(p) = self.corpus.patches.as_mut() {
            fix(p);
        }
        if let Some(p) = self.tokenizer.rules.as_mut() {
            fix(p);
        }
        if let Some(p) = self.tokenizer.stopwords.as_mut() {
            fix(p);
        }
        fix(&mut self.output.dir);
    }

    /// Every referenced input file must exist.
    pub fn validate(&self) -> Result<()> {
        let inputs = std::iter::once(&self.corpus.path)
            .chain(self.corpus.patches.as_ref())
            .chain(self.tokenizer.rules.as_ref())
            .chain(self.tokenizer.stopwords.as_ref());
        for p in inputs {
            if !p.is_file() {
                return Err(MissingInput(p.clone()).into());
            }
        }
        let c = &self.classify;
        anyhow::ensure!(c.runs > 0, "classify.runs must be positive");
        anyhow::ensure!(c.test_fraction > 0.0 && c.test_fraction < 1.0, "classify.test_fraction must lie in (0, 1)");
        anyhow::ensure!(!c.lambdas.is_empty() && !c.alphas.is_empty(), "classify grid must be non-empty");
        anyhow::ensure!(self.markov.rescale_a != 0.0, "markov.rescale_a must be non-zero");
        Ok(())
    }
}
