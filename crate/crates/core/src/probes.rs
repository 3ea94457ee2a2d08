//! Canto-level trigram aggregation, V/C class trends, probe screening,
//! single-word ratios and context retrieval.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{spearman_trend, StatsError, TestResult};
use crate::tokenizer::Token;
use crate::vc::{trigram_scan, ScanOptions, SymbolSequence, TrigramOccurrence, VcClass, VcPattern};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("trigram {0:?} has no occurrences")]
    EmptyProfile(String),
    #[error("need at least 4 cantos for trend tests, got {0}")]
    TooFewCantos(usize),
    #[error("stats: {0}")]
    Stats(#[from] StatsError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrigramProfile {
    pub letters: String,
    pub pattern: VcPattern,
    pub class: VcClass,
    /// Raw counts in canto order.
    pub per_canto_counts: Vec<u64>,
    pub total: u64,
    /// Occurrences inside a single token.
    pub sw_count: u64,
}

impl TrigramProfile {
    fn empty(letters: String, pattern: VcPattern, n_cantos: usize) -> Self {
        TrigramProfile {
            letters,
            class: pattern.class(),
            pattern,
            per_canto_counts: vec![0; n_cantos],
            total: 0,
            sw_count: 0,
        }
    }
}

/// All letter trigrams of a corpus with per-canto symbol counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigramTable {
    pub symbol_counts: Vec<usize>,
    pub profiles: BTreeMap<String, TrigramProfile>,
}

impl TrigramTable {
    pub fn n_cantos(&self) -> usize {
        self.symbol_counts.len()
    }

    /// Scans every canto (in slice order) and merges the counts.
    pub fn build(seqs: &[SymbolSequence], opts: ScanOptions) -> Self {
        let n = seqs.len();
        let per_canto: Vec<BTreeMap<String, (VcPattern, u64, u64)>> = seqs
            .par_iter()
            .map(|s| {
                let mut m: BTreeMap<String, (VcPattern, u64, u64)> = BTreeMap::new();
                for occ in trigram_scan(s, opts) {
                    let e = m.entry(occ.letters).or_insert((occ.pattern, 0, 0));
                    e.1 += 1;
                    e.2 += u64::from(occ.single_word);
                }
                m
            })
            .collect();
        let mut profiles: BTreeMap<String, TrigramProfile> = BTreeMap::new();
        for (idx, m) in per_canto.into_iter().enumerate() {
            for (letters, (pattern, count, sw)) in m {
                let p = profiles
                    .entry(letters.clone())
                    .or_insert_with(|| TrigramProfile::empty(letters, pattern, n));
                p.per_canto_counts[idx] += count;
                p.total += count;
                p.sw_count += sw;
            }
        }
        TrigramTable {
            symbol_counts: seqs.iter().map(SymbolSequence::len).collect(),
            profiles,
        }
    }

    /// Counts per 1,000 symbols in canto order.
    pub fn normalized(&self, counts: &[u64]) -> Vec<f64> {
        counts
            .iter()
            .zip(&self.symbol_counts)
            .map(|(&c, &len)| 1000.0 * c as f64 / len.max(1) as f64)
            .collect()
    }

    fn summed_counts<F: Fn(&TrigramProfile) -> bool>(&self, keep: F) -> Vec<u64> {
        let mut out = vec![0u64; self.n_cantos()];
        for p in self.profiles.values().filter(|p| keep(p)) {
            for (o, c) in out.iter_mut().zip(&p.per_canto_counts) {
                *o += c;
            }
        }
        out
    }
}

fn canto_axis(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTrends {
    pub classes: BTreeMap<VcClass, TestResult>,
    pub patterns: BTreeMap<VcPattern, TestResult>,
}

impl ClassTrends {
    pub fn sign(&self, class: VcClass) -> i8 {
        self.classes.get(&class).map_or(0, |t| sign(t.statistic))
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Spearman ρ of normalized per-canto class and pattern counts against canto order.
pub fn class_trends(table: &TrigramTable) -> Result<ClassTrends, ProbeError> {
    let n = table.n_cantos();
    if n < 4 {
        return Err(ProbeError::TooFewCantos(n));
    }
    let axis = canto_axis(n);
    let mut classes = BTreeMap::new();
    for class in [VcClass::Zero, VcClass::OneEnd, VcClass::OneStart, VcClass::Two] {
        let series = table.normalized(&table.summed_counts(|p| p.class == class));
        classes.insert(class, spearman_trend(&axis, &series)?);
    }
    let mut patterns = BTreeMap::new();
    for pattern in VcPattern::ALL {
        let series = table.normalized(&table.summed_counts(|p| p.pattern == pattern));
        patterns.insert(pattern, spearman_trend(&axis, &series)?);
    }
    Ok(ClassTrends { classes, patterns })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenParams {
    pub min_support: u64,
    pub alpha: f64,
}

impl Default for ScreenParams {
    fn default() -> Self {
        ScreenParams {
            min_support: 50,
            alpha: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub profile: TrigramProfile,
    pub rho: f64,
    pub p_value: f64,
    pub class_trend_sign: i8,
    pub retained: bool,
    pub sw_pct: f64,
}

impl ProbeRecord {
    /// Retention predicate recomputed from the stored fields.
    pub fn satisfies_screen(&self, alpha: f64) -> bool {
        self.p_value < alpha && sign(self.rho) == self.class_trend_sign && self.class_trend_sign != 0
    }
}

pub fn sw_ratio(profile: &TrigramProfile) -> Result<f64, ProbeError> {
    if profile.total == 0 {
        return Err(ProbeError::EmptyProfile(profile.letters.clone()));
    }
    Ok(100.0 * profile.sw_count as f64 / profile.total as f64)
}

/// Tests every trigram with at least `min_support` occurrences; output is
/// ordered by letters.
pub fn screen_probes(table: &TrigramTable, trends: &ClassTrends, params: ScreenParams) -> Result<Vec<ProbeRecord>, ProbeError> {
    let axis = canto_axis(table.n_cantos());
    let candidates: Vec<&TrigramProfile> = table
        .profiles
        .values()
        .filter(|p| p.total >= params.min_support)
        .collect();
    candidates
        .par_iter()
        .map(|p| {
            let t = spearman_trend(&axis, &table.normalized(&p.per_canto_counts))?;
            let class_sign = trends.sign(p.class);
            let mut rec = ProbeRecord {
                profile: (*p).clone(),
                rho: t.statistic,
                p_value: t.p_value,
                class_trend_sign: class_sign,
                retained: false,
                sw_pct: sw_ratio(p)?,
            };
            rec.retained = rec.satisfies_screen(params.alpha);
            Ok(rec)
        })
        .collect()
}

/// Pooled single-word share per class over retained probes: Σ sw / Σ total.
pub fn class_sw_aggregate(records: &[ProbeRecord]) -> BTreeMap<VcClass, f64> {
    let mut acc: BTreeMap<VcClass, (u64, u64)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.retained) {
        let e = acc.entry(r.profile.class).or_default();
        e.0 += r.profile.sw_count;
        e.1 += r.profile.total;
    }
    acc.into_iter()
        .filter(|(_, (_, total))| *total > 0)
        .map(|(c, (sw, total))| (c, 100.0 * sw as f64 / total as f64))
        .collect()
}

/// Tokens around an occurrence with the three trigram characters wrapped in `**`.
/// `window` extra tokens are taken on each side of the covering tokens.
pub fn lexical_context(occ: &TrigramOccurrence, seq: &SymbolSequence, tokens: &[Token], window: usize) -> String {
    let start = occ.position;
    let end = occ.position + 2;
    let first_tok = seq.token_ids[start] as usize;
    let last_tok = seq.token_ids[end] as usize;
    let open = (first_tok, seq.offsets[start] as usize);
    let close = (last_tok, seq.offsets[end] as usize);
    let lo = first_tok.saturating_sub(window);
    let hi = (last_tok + window).min(tokens.len() - 1);
    let mut out = String::new();
    for (t, tok) in tokens.iter().enumerate().take(hi + 1).skip(lo) {
        if t > lo {
            out.push(' ');
        }
        for (k, c) in tok.surface.chars().enumerate() {
            if (t, k) == open {
                out.push_str("**");
            }
            out.push(c);
            if (t, k) == close {
                out.push_str("**");
            }
        }
    }
    out
}

pub fn write_probes_csv<W: Write>(out: W, records: &[ProbeRecord]) -> Result<(), ProbeError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["letters", "vc_pattern", "class", "rho", "p", "retained", "sw_pct", "total"])?;
    for r in records {
        w.write_record([
            r.profile.letters.clone(),
            r.profile.pattern.as_str().to_string(),
            r.profile.class.as_str().to_string(),
            format!("{:.6}", r.rho),
            format!("{:.6e}", r.p_value),
            r.retained.to_string(),
            format!("{:.2}", r.sw_pct),
            r.profile.total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_class_trends_csv<W: Write>(out: W, trends: &ClassTrends) -> Result<(), ProbeError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "name", "rho", "p"])?;
    for (c, t) in &trends.classes {
        w.write_record(["class", c.as_str(), &format!("{:.6}", t.statistic), &format!("{:.6e}", t.p_value)])?;
    }
    for (pat, t) in &trends.patterns {
        w.write_record(["pattern", pat.as_str(), &format!("{:.6}", t.statistic), &format!("{:.6e}", t.p_value)])?;
    }
    w.flush()?;
    Ok(())
}
