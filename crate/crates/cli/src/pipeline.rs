//! Pipeline stages with content-addressed caching of intermediate artifacts.
//!
//! Each stage key is the SHA-256 of the stage name, the crate version, the
//! stage's config section, the bytes of any files it reads, and the keys of
//! the stages it consumes. Artifacts are stored as JSON under `cache/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use anyhow::{Context, Result};
use commedia_core::anchors::{anchor_report, anchored_sw_means, link_probes_to_terms, AnchorRecord, TermFrequencies};
use commedia_core::classify::{fit_full, monte_carlo_validate, progression, top_terms, FullFit, LabeledDoc, Progression, TermRanking, ValidationReport};
use commedia_core::corpus::{CorpusDocument, PatchSet};
use commedia_core::markov::{fit_canto, CantoDependency};
use commedia_core::probes::{class_sw_aggregate, class_trends, lexical_context, screen_probes, ClassTrends, ProbeRecord, TrigramTable};
use commedia_core::tokenizer::{build_stopwords, token_stats, tokenize_corpus, RuleConfig, StopwordList, TokenStats, TokenizedCanto};
use commedia_core::vc::{encode_canto, trigram_scan, CharClassTable, ScanOptions, SymbolSequence, VcClass};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{sensitivity, trends, StatRow};
use crate::config::RunConfig;
use crate::MissingInput;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ingested {
    pub doc: CorpusDocument,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tokenized {
    pub cantos: Vec<TokenizedCanto>,
    pub stats: Vec<TokenStats>,
    pub stopwords: StopwordList,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Encoded {
    pub sequences: Vec<SymbolSequence>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovOut {
    pub rows: Vec<CantoDependency>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendsOut {
    pub rows: Vec<StatRow>,
    pub sensitivity: Vec<StatRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeContexts {
    pub letters: String,
    pub contexts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbesOut {
    pub class_trends: ClassTrends,
    pub records: Vec<ProbeRecord>,
    pub class_sw: BTreeMap<VcClass, f64>,
    pub contexts: Vec<ProbeContexts>,
}

impl ProbesOut {
    pub fn retained(&self) -> impl Iterator<Item = &ProbeRecord> {
        self.records.iter().filter(|r| r.retained)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyOut {
    pub class_names: Vec<String>,
    pub report: ValidationReport,
    pub full: FullFit,
    pub ranking: TermRanking,
    pub progression: Option<Progression>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorsOut {
    pub records: Vec<AnchorRecord>,
    pub anchored_sw_mean: Option<f64>,
    pub retained_sw_mean: Option<f64>,
}

/// Runs stages on demand, each at most once per process.
pub struct Pipeline {
    pub config: RunConfig,
    cache_dir: PathBuf,
    keys: BTreeMap<&'static str, String>,
    ingested: Option<Rc<Ingested>>,
    tokenized: Option<Rc<Tokenized>>,
    encoded: Option<Rc<Encoded>>,
    markov: Option<Rc<MarkovOut>>,
    trends: Option<Rc<TrendsOut>>,
    probes: Option<Rc<ProbesOut>>,
    classify: Option<Rc<ClassifyOut>>,
    anchors: Option<Rc<AnchorsOut>>,
}

fn hash_parts(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("config sections serialize")
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(MissingInput(path.to_path_buf()).into());
    }
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn optional_input(path: Option<&PathBuf>) -> Result<Vec<u8>> {
    path.map_or(Ok(Vec::new()), |p| read_input(p))
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Self {
        let cache_dir = config.output.dir.join("cache");
        Pipeline {
            config,
            cache_dir,
            keys: BTreeMap::new(),
            ingested: None,
            tokenized: None,
            encoded: None,
            markov: None,
            trends: None,
            probes: None,
            classify: None,
            anchors: None,
        }
    }

    /// Keys of every stage computed so far.
    pub fn keys(&self) -> &BTreeMap<&'static str, String> {
        &self.keys
    }

    fn cached<T, F>(&mut self, stage: &'static str, key: String, compute: F) -> Result<Rc<T>>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce(&mut Self) -> Result<T>,
    {
        let path = self.cache_dir.join(format!("{stage}-{}.json", &key[..16]));
        self.keys.insert(stage, key);
        if path.is_file() {
            let bytes = fs::read(&path)?;
            if let Ok(v) = serde_json::from_slice(&bytes) {
                log::info!("{stage}: cache hit ({})", path.display());
                return Ok(Rc::new(v));
            }
            log::warn!("{stage}: unreadable cache entry {}, recomputing", path.display());
        }
        log::info!("{stage}: computing");
        let value = compute(self).with_context(|| format!("stage {stage} failed"))?;
        fs::create_dir_all(&self.cache_dir)?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec(&value)?)?;
        fs::rename(&tmp, &path)?;
        Ok(Rc::new(value))
    }

    pub fn ingest(&mut self) -> Result<Rc<Ingested>> {
        if let Some(v) = &self.ingested {
            return Ok(v.clone());
        }
        let c = self.config.corpus.clone();
        let corpus_bytes = read_input(&c.path)?;
        let patch_bytes = optional_input(c.patches.as_ref())?;
        let key = hash_parts(&[b"ingest", VERSION.as_bytes(), &corpus_bytes, &patch_bytes, &json(&c.profile)]);
        let v = self.cached("ingest", key, |_| {
            let text = String::from_utf8(corpus_bytes).context("corpus is not UTF-8")?;
            let source = c.path.file_name().map_or("corpus".into(), |s| s.to_string_lossy().into_owned());
            let mut doc = CorpusDocument::parse(&text, &source, &c.profile.profile())?;
            if c.patches.is_some() {
                let patches = PatchSet::parse(std::str::from_utf8(&patch_bytes).context("patch file is not UTF-8")?)?;
                doc = doc.apply_patches(&patches)?;
            }
            Ok(Ingested { doc })
        })?;
        self.ingested = Some(v.clone());
        Ok(v)
    }

    pub fn tokenize(&mut self) -> Result<Rc<Tokenized>> {
        if let Some(v) = &self.tokenized {
            return Ok(v.clone());
        }
        let ing = self.ingest()?;
        let t = self.config.tokenizer.clone();
        let rules_bytes = optional_input(t.rules.as_ref())?;
        let stop_bytes = optional_input(t.stopwords.as_ref())?;
        let key = hash_parts(&[b"tokenize", VERSION.as_bytes(), self.keys["ingest"].as_bytes(), &json(&t), &rules_bytes, &stop_bytes]);
        let v = self.cached("tokenize", key, |_| {
            let rules = match &t.rules {
                Some(p) => RuleConfig::load(p)?,
                None => RuleConfig::default(),
            };
            let cantos = tokenize_corpus(&ing.doc, &rules);
            let stopwords = match &t.stopwords {
                Some(p) => StopwordList::load(p)?,
                None => build_stopwords(&cantos, &t.stopword_params()),
            };
            let stats = cantos.iter().map(token_stats).collect();
            Ok(Tokenized { cantos, stats, stopwords })
        })?;
        self.tokenized = Some(v.clone());
        Ok(v)
    }

    fn char_table(&self) -> CharClassTable {
        match &self.config.encoding.vowels {
            Some(v) => CharClassTable {
                vowels: v.chars().collect(),
            },
            None => CharClassTable::default(),
        }
    }

    pub fn encode(&mut self) -> Result<Rc<Encoded>> {
        if let Some(v) = &self.encoded {
            return Ok(v.clone());
        }
        let ing = self.ingest()?;
        let tok = self.tokenize()?;
        let table = self.char_table();
        let key = hash_parts(&[b"encode", VERSION.as_bytes(), self.keys["tokenize"].as_bytes(), &json(&self.config.encoding)]);
        let v = self.cached("encode", key, |_| {
            let sequences = ing
                .doc
                .cantos()
                .zip(&tok.cantos)
                .collect::<Vec<_>>()
                .par_iter()
                .map(|(canto, t)| encode_canto(canto, &t.tokens, &table))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Encoded { sequences })
        })?;
        self.encoded = Some(v.clone());
        Ok(v)
    }

    pub fn markov(&mut self) -> Result<Rc<MarkovOut>> {
        if let Some(v) = &self.markov {
            return Ok(v.clone());
        }
        let ing = self.ingest()?;
        let enc = self.encode()?;
        let rescale = self.config.markov.rescale();
        let key = hash_parts(&[b"markov", VERSION.as_bytes(), self.keys["encode"].as_bytes(), &json(&self.config.markov)]);
        let v = self.cached("markov", key, |_| {
            let cantos: Vec<_> = ing.doc.cantos().collect();
            let rows = enc
                .sequences
                .par_iter()
                .zip(cantos.par_iter())
                .map(|(s, c)| fit_canto(c.global_index, &c.cantica, &s.symbols, rescale).with_context(|| format!("canto {}", c.label())))
                .collect::<Result<Vec<_>>>()?;
            Ok(MarkovOut { rows })
        })?;
        self.markov = Some(v.clone());
        Ok(v)
    }

    pub fn trends(&mut self) -> Result<Rc<TrendsOut>> {
        if let Some(v) = &self.trends {
            return Ok(v.clone());
        }
        let ing = self.ingest()?;
        let tok = self.tokenize()?;
        let mk = self.markov()?;
        let key = hash_parts(&[b"trends", VERSION.as_bytes(), self.keys["tokenize"].as_bytes(), self.keys["markov"].as_bytes()]);
        let v = self.cached("trends", key, |_| {
            let names = ing.doc.cantica_names();
            Ok(TrendsOut {
                rows: trends(&tok.stats, &mk.rows, &names)?,
                sensitivity: sensitivity(&mk.rows, &names)?,
            })
        })?;
        self.trends = Some(v.clone());
        Ok(v)
    }

    pub fn probes(&mut self) -> Result<Rc<ProbesOut>> {
        if let Some(v) = &self.probes {
            return Ok(v.clone());
        }
        let tok = self.tokenize()?;
        let enc = self.encode()?;
        let cfg = self.config.probes.clone();
        let opts = ScanOptions {
            cross_verses: self.config.encoding.cross_verses,
        };
        let key = hash_parts(&[b"probes", VERSION.as_bytes(), self.keys["encode"].as_bytes(), &json(&cfg)]);
        let v = self.cached("probes", key, |_| {
            let table = TrigramTable::build(&enc.sequences, opts);
            let class_trends = class_trends(&table)?;
            let records = screen_probes(&table, &class_trends, cfg.screen())?;
            let class_sw = class_sw_aggregate(&records);
            let mut contexts: BTreeMap<String, Vec<String>> = records
                .iter()
                .filter(|r| r.retained)
                .map(|r| (r.profile.letters.clone(), Vec::new()))
                .collect();
            'scan: for (seq, t) in enc.sequences.iter().zip(&tok.cantos) {
                for occ in trigram_scan(seq, opts) {
                    if let Some(list) = contexts.get_mut(&occ.letters) {
                        if list.len() < cfg.contexts_per_probe {
                            list.push(format!("{} {}", seq.canto, lexical_context(&occ, seq, &t.tokens, cfg.context_window)));
                        }
                    }
                }
                if contexts.values().all(|l| l.len() >= cfg.contexts_per_probe) {
                    break 'scan;
                }
            }
            Ok(ProbesOut {
                class_trends,
                records,
                class_sw,
                contexts: contexts
                    .into_iter()
                    .map(|(letters, contexts)| ProbeContexts { letters, contexts })
                    .collect(),
            })
        })?;
        self.probes = Some(v.clone());
        Ok(v)
    }

    fn labeled_docs(ing: &Ingested, tok: &Tokenized) -> Vec<LabeledDoc> {
        ing.doc
            .cantos()
            .zip(&tok.cantos)
            .map(|(c, t)| LabeledDoc::from_tokens(c.global_index, c.number, c.cantica_index, &t.tokens))
            .collect()
    }

    pub fn classify(&mut self) -> Result<Rc<ClassifyOut>> {
        if let Some(v) = &self.classify {
            return Ok(v.clone());
        }
        let ing = self.ingest()?;
        let tok = self.tokenize()?;
        let cfg = self.config.classify.clone();
        let key = hash_parts(&[b"classify", VERSION.as_bytes(), self.keys["tokenize"].as_bytes(), &json(&cfg)]);
        let v = self.cached("classify", key, |_| {
            let docs = Self::labeled_docs(&ing, &tok);
            let class_names = ing.doc.cantica_names();
            let k = class_names.len();
            let params = cfg.mc_params();
            let report = monte_carlo_validate(&docs, k, &tok.stopwords, &params)?;
            let full = fit_full(&docs, k, &tok.stopwords, &params)?;
            let ranking = top_terms(&full, cfg.top_terms);
            let progression = if k == 3 {
                Some(progression(&full.model, &full.dtm.vocabulary, &docs, 1, 2, 0)?)
            } else {
                None
            };
            Ok(ClassifyOut {
                class_names,
                report,
                full,
                ranking,
                progression,
            })
        })?;
        self.classify = Some(v.clone());
        Ok(v)
    }

    pub fn anchors(&mut self) -> Result<Rc<AnchorsOut>> {
        if let Some(v) = &self.anchors {
            return Ok(v.clone());
        }
        let ing = self.ingest()?;
        let tok = self.tokenize()?;
        let pr = self.probes()?;
        let cl = self.classify()?;
        let key = hash_parts(&[b"anchors", VERSION.as_bytes(), self.keys["probes"].as_bytes(), self.keys["classify"].as_bytes()]);
        let v = self.cached("anchors", key, |_| {
            let docs = Self::labeled_docs(&ing, &tok);
            let freqs = TermFrequencies::from_docs(&docs, cl.class_names.len());
            let records = anchor_report(link_probes_to_terms(&pr.records, &cl.ranking, &cl.class_names, &freqs)?);
            let (anchored_sw_mean, retained_sw_mean) = anchored_sw_means(&records, &pr.records);
            Ok(AnchorsOut {
                records,
                anchored_sw_mean,
                retained_sw_mean,
            })
        })?;
        self.anchors = Some(v.clone());
        Ok(v)
    }
}
