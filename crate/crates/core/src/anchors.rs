//! Links retained probes to classifier top terms that contain them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{LabeledDoc, TermRanking};
use crate::probes::ProbeRecord;

#[derive(Debug, Error)]
pub enum AnchorError {
    #[error("term {0:?} never occurs in the corpus")]
    ZeroFrequency(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Corpus frequency of every term split by class.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TermFrequencies {
    pub n_classes: usize,
    pub by_term: BTreeMap<String, Vec<u64>>,
}

impl TermFrequencies {
    pub fn from_docs(docs: &[LabeledDoc], n_classes: usize) -> Self {
        let mut by_term: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for d in docs {
            for (t, &c) in &d.terms {
                by_term.entry(t.clone()).or_insert_with(|| vec![0; n_classes])[d.label] += c;
            }
        }
        TermFrequencies { n_classes, by_term }
    }

    pub fn total(&self, term: &str) -> u64 {
        self.by_term.get(term).map_or(0, |v| v.iter().sum())
    }

    /// Largest per-class share of the term's occurrences.
    pub fn max_share(&self, term: &str) -> Option<f64> {
        let v = self.by_term.get(term)?;
        let total: u64 = v.iter().sum();
        (total > 0).then(|| *v.iter().max().expect("non-empty") as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub term: String,
    pub probe_letters: String,
    /// Class under which the term ranked, and its 1-based rank there.
    pub cantica: String,
    pub rank: usize,
    pub term_total_freq: u64,
    pub cantica_share: f64,
    pub signal_score: f64,
}

/// ln(1 + freq) · share.
pub fn signal_score(term: &str, term_total_freq: u64, share: f64) -> Result<f64, AnchorError> {
    if term_total_freq == 0 {
        return Err(AnchorError::ZeroFrequency(term.to_string()));
    }
    Ok((term_total_freq as f64).ln_1p() * share)
}

/// One record per (term, retained probe) with the probe inside the term.
/// A term ranked under several classes keeps its best rank.
pub fn link_probes_to_terms(
    probes: &[ProbeRecord],
    rankings: &TermRanking,
    class_names: &[String],
    freqs: &TermFrequencies,
) -> Result<Vec<AnchorRecord>, AnchorError> {
    let letters: BTreeSet<&str> = probes
        .iter()
        .filter(|p| p.retained)
        .map(|p| p.profile.letters.as_str())
        .collect();
    let mut best: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    for (class, terms) in rankings.iter().enumerate() {
        for (rank, (term, _)) in terms.iter().enumerate() {
            for &probe in letters.iter().filter(|l| term.contains(**l)) {
                let key = (term.clone(), probe.to_string());
                let cand = (rank + 1, class);
                best.entry(key).and_modify(|b| *b = (*b).min(cand)).or_insert(cand);
            }
        }
    }
    best.into_iter()
        .map(|((term, probe), (rank, class))| {
            let total = freqs.total(&term);
            let share = freqs.max_share(&term).unwrap_or(0.0);
            Ok(AnchorRecord {
                signal_score: signal_score(&term, total, share)?,
                term,
                probe_letters: probe,
                cantica: class_names[class].clone(),
                rank,
                term_total_freq: total,
                cantica_share: share,
            })
        })
        .collect()
}

/// Descending score, ties by term then probe.
pub fn anchor_report(mut records: Vec<AnchorRecord>) -> Vec<AnchorRecord> {
    records.sort_by(|a, b| {
        b.signal_score
            .total_cmp(&a.signal_score)
            .then_with(|| a.term.cmp(&b.term))
            .then_with(|| a.probe_letters.cmp(&b.probe_letters))
    });
    records
}

/// Mean probe-level SW% over anchored probes and over all retained probes.
pub fn anchored_sw_means(records: &[AnchorRecord], probes: &[ProbeRecord]) -> (Option<f64>, Option<f64>) {
    let anchored: BTreeSet<&str> = records.iter().map(|r| r.probe_letters.as_str()).collect();
    let mean = |it: Vec<f64>| (!it.is_empty()).then(|| it.iter().sum::<f64>() / it.len() as f64);
    let retained: Vec<&ProbeRecord> = probes.iter().filter(|p| p.retained).collect();
    (
        mean(retained
            .iter()
            .filter(|p| anchored.contains(p.profile.letters.as_str()))
            .map(|p| p.sw_pct)
            .collect()),
        mean(retained.iter().map(|p| p.sw_pct).collect()),
    )
}

pub fn write_anchors_csv<W: Write>(out: W, records: &[AnchorRecord]) -> Result<(), AnchorError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["term", "probe", "cantica", "score"])?;
    for r in records {
        w.write_record([r.term.as_str(), &r.probe_letters, &r.cantica, &format!("{:.6}", r.signal_score)])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
