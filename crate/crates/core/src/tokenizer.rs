//! Apostrophe-aware tokenization.
//!
//! Every apostrophe in a verse is classified as an independent event *before*
//! the verse is split into tokens. Tokens are the maximal alphabetic runs of
//! the raw verse (apostrophes, whitespace and punctuation all separate), and
//! each non-isolated event labels exactly one host token: the token to the
//! right of the mark for apheresis (`'l`), the token to the left otherwise
//! (`se'`, `l'altro`, `ch'io`).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Canto, CorpusDocument};

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("rule sets overlap on {0:?}: clitic_left and crasis_left must be disjoint")]
    OverlappingRules(Vec<String>),
    #[error("stopword {0:?} is not a lowercase alphabetic word")]
    BadStopword(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// U+0027 and U+2019 both count as apostrophes.
pub fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Lowercases one character without changing the character count.
pub(crate) fn lower(c: char) -> char {
    let mut it = c.to_lowercase();
    match (it.next(), it.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApostropheCategory {
    Apheresis,
    Apocope,
    CliticElision,
    NoncliticElision,
    CrasisContraction,
    GeneralElision,
    Isolated,
}

impl ApostropheCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ApostropheCategory::Apheresis => "apheresis",
            ApostropheCategory::Apocope => "apocope",
            ApostropheCategory::CliticElision => "clitic_elision",
            ApostropheCategory::NoncliticElision => "nonclitic_elision",
            ApostropheCategory::CrasisContraction => "crasis_contraction",
            ApostropheCategory::GeneralElision => "general_elision",
            ApostropheCategory::Isolated => "isolated",
        }
    }
}

impl fmt::Display for ApostropheCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApostropheEvent {
    pub canto: usize,
    /// 0-based verse index within the canto.
    pub verse: usize,
    /// Offset of the apostrophe in the raw verse, in characters.
    pub char_offset: usize,
    pub left: String,
    pub right: String,
    pub category: ApostropheCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// Lowercase, alphabetic only.
    pub surface: String,
    pub canto: usize,
    /// 0-based verse index within the canto.
    pub verse: usize,
    /// Half-open character span in the raw verse.
    pub raw_span: (usize, usize),
    /// Half-open character span in the cleaned verse (surfaces joined by single spaces).
    pub clean_span: (usize, usize),
    /// Categories of the events hosted by this token, in event order.
    pub labels: Vec<ApostropheCategory>,
}

impl Token {
    pub fn has_apostrophe(&self) -> bool {
        !self.labels.is_empty()
    }

    /// Number of distinct process labels (2+ means a combined process).
    pub fn distinct_labels(&self) -> usize {
        self.labels.iter().collect::<BTreeSet<_>>().len()
    }

    pub fn len_chars(&self) -> usize {
        self.raw_span.1 - self.raw_span.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleConfig {
    pub clitic_left: BTreeSet<String>,
    pub crasis_left: BTreeSet<String>,
    pub crasis_right_pronouns: BTreeSet<String>,
    pub nonclitic_left: BTreeSet<String>,
    /// Left segments of at most this many characters fall back to non-clitic elision.
    #[serde(default = "default_short_left")]
    pub short_left_max: usize,
}

fn default_short_left() -> usize {
    2
}

fn set(words: &[&str]) -> BTreeSet<String> {
    words.iter().map(|w| w.to_string()).collect()
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            clitic_left: set(&["l", "gl", "m", "t", "s", "v", "c", "n"]),
            crasis_left: set(&["ch", "com", "quand", "quant", "anch"]),
            crasis_right_pronouns: set(&["io", "i", "ei", "el", "ella", "elli", "egli"]),
            nonclitic_left: set(&[
                "ch", "d", "ond", "tutt", "grand", "sant", "quell", "quest", "mezz", "contr", "sopr", "tant",
            ]),
            short_left_max: default_short_left(),
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), TokenizerError> {
        let overlap: Vec<String> = self.clitic_left.intersection(&self.crasis_left).cloned().collect();
        if overlap.is_empty() {
            Ok(())
        } else {
            Err(TokenizerError::OverlappingRules(overlap))
        }
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let text = fs::read_to_string(path).map_err(|source| TokenizerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let rules: RuleConfig = serde_json::from_str(&text)?;
        rules.validate()?;
        Ok(rules)
    }

    /// Decision procedure for one apostrophe given its adjacent alphabetic runs.
    pub fn categorize(&self, left: &str, right: &str) -> ApostropheCategory {
        use ApostropheCategory::*;
        match (left.is_empty(), right.is_empty()) {
            (true, true) => return Isolated,
            (true, false) => return Apheresis,
            (false, true) => return Apocope,
            (false, false) => {}
        }
        let left: String = left.chars().map(lower).collect();
        let right: String = right.chars().map(lower).collect();
        if self.clitic_left.contains(&left) {
            CliticElision
        } else if self.crasis_left.contains(&left) && self.crasis_right_pronouns.contains(&right) {
            CrasisContraction
        } else if self.nonclitic_left.contains(&left) || left.chars().count() <= self.short_left_max {
            NoncliticElision
        } else {
            GeneralElision
        }
    }
}

/// Maximal alphabetic runs of a character slice, as half-open spans.
fn alphabetic_runs(chars: &[char]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, c) in chars.iter().enumerate() {
        match (c.is_alphabetic(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, chars.len()));
    }
    runs
}

pub fn classify_apostrophes(canto: &Canto, rules: &RuleConfig) -> Vec<ApostropheEvent> {
    let mut events = Vec::new();
    for (v, verse) in canto.verses.iter().enumerate() {
        let chars: Vec<char> = verse.chars().collect();
        for (i, &c) in chars.iter().enumerate() {
            if !is_apostrophe(c) {
                continue;
            }
            let mut l = i;
            while l > 0 && chars[l - 1].is_alphabetic() {
                l -= 1;
            }
            let mut r = i + 1;
            while r < chars.len() && chars[r].is_alphabetic() {
                r += 1;
            }
            let left: String = chars[l..i].iter().collect();
            let right: String = chars[i + 1..r].iter().collect();
            let category = rules.categorize(&left, &right);
            events.push(ApostropheEvent {
                canto: canto.global_index,
                verse: v,
                char_offset: i,
                left,
                right,
                category,
            });
        }
    }
    events
}

pub fn segment(canto: &Canto, events: &[ApostropheEvent]) -> Vec<Token> {
    let mut tokens = Vec::new();
    // (verse, raw start) and (verse, raw end) -> token index
    let mut by_start = HashMap::new();
    let mut by_end = HashMap::new();
    for (v, verse) in canto.verses.iter().enumerate() {
        let chars: Vec<char> = verse.chars().collect();
        let mut clean_pos = 0;
        for (s, e) in alphabetic_runs(&chars) {
            if clean_pos > 0 {
                clean_pos += 1;
            }
            let surface: String = chars[s..e].iter().map(|&c| lower(c)).collect();
            let len = e - s;
            by_start.insert((v, s), tokens.len());
            by_end.insert((v, e), tokens.len());
            tokens.push(Token {
                surface,
                canto: canto.global_index,
                verse: v,
                raw_span: (s, e),
                clean_span: (clean_pos, clean_pos + len),
                labels: Vec::new(),
            });
            clean_pos += len;
        }
    }
    for ev in events {
        let host = match ev.category {
            ApostropheCategory::Isolated => None,
            ApostropheCategory::Apheresis => by_start.get(&(ev.verse, ev.char_offset + 1)),
            _ => by_end.get(&(ev.verse, ev.char_offset)),
        };
        if let Some(&t) = host {
            tokens[t].labels.push(ev.category);
        }
    }
    tokens
}

/// Cleaned verse text: token surfaces joined by single spaces.
pub fn cleaned_verse(tokens: &[Token], verse: usize) -> String {
    tokens
        .iter()
        .filter(|t| t.verse == verse)
        .map(|t| t.surface.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedCanto {
    pub canto: usize,
    pub cantica_index: usize,
    pub events: Vec<ApostropheEvent>,
    pub tokens: Vec<Token>,
}

pub fn tokenize_canto(canto: &Canto, rules: &RuleConfig) -> TokenizedCanto {
    let events = classify_apostrophes(canto, rules);
    let tokens = segment(canto, &events);
    TokenizedCanto {
        canto: canto.global_index,
        cantica_index: canto.cantica_index,
        events,
        tokens,
    }
}

pub fn tokenize_corpus(doc: &CorpusDocument, rules: &RuleConfig) -> Vec<TokenizedCanto> {
    let cantos: Vec<&Canto> = doc.cantos().collect();
    cantos.par_iter().map(|c| tokenize_canto(c, rules)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopwordProvenance {
    Generated,
    File,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopwordList {
    pub words: BTreeSet<String>,
    pub provenance: StopwordProvenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopwordParams {
    pub top_k: usize,
    pub min_canto_dispersion: usize,
    #[serde(default)]
    pub keep_exceptions: BTreeSet<String>,
}

impl Default for StopwordParams {
    fn default() -> Self {
        StopwordParams {
            top_k: 150,
            min_canto_dispersion: 80,
            keep_exceptions: BTreeSet::new(),
        }
    }
}

impl StopwordList {
    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    /// Reads a JSON array of words; the file replaces any generated list verbatim.
    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let text = fs::read_to_string(path).map_err(|source| TokenizerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let words: BTreeSet<String> = serde_json::from_str(&text)?;
        for w in &words {
            if w.is_empty() || !w.chars().all(|c| c.is_alphabetic() && lower(c) == c) {
                return Err(TokenizerError::BadStopword(w.clone()));
            }
        }
        Ok(StopwordList {
            words,
            provenance: StopwordProvenance::File,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.words).expect("stopword serialization cannot fail")
    }
}

pub fn build_stopwords(corpus: &[TokenizedCanto], params: &StopwordParams) -> StopwordList {
    let mut freq: BTreeMap<&str, (usize, BTreeSet<usize>)> = BTreeMap::new();
    for canto in corpus {
        for t in &canto.tokens {
            let entry = freq.entry(t.surface.as_str()).or_default();
            entry.0 += 1;
            entry.1.insert(canto.canto);
        }
    }
    let mut ranked: Vec<(&str, usize, usize)> = freq
        .into_iter()
        .map(|(w, (n, cantos))| (w, n, cantos.len()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let words = ranked
        .into_iter()
        .take(params.top_k)
        .filter(|&(w, _, disp)| disp >= params.min_canto_dispersion && !params.keep_exceptions.contains(w))
        .map(|(w, _, _)| w.to_string())
        .collect();
    StopwordList {
        words,
        provenance: StopwordProvenance::Generated,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub canto: usize,
    pub token_count: usize,
    /// Tokens carrying exactly one distinct apostrophe process.
    pub apostrophe_tokens: usize,
    /// Tokens carrying two or more distinct processes (excluded from the rate).
    pub combined_tokens: usize,
    pub isolated_events: usize,
    pub apostrophe_rate_per_100: f64,
    pub mean_token_length: f64,
    pub alphabetic_chars: usize,
}

pub fn token_stats(canto: &TokenizedCanto) -> TokenStats {
    let token_count = canto.tokens.len();
    let apostrophe_tokens = canto.tokens.iter().filter(|t| t.distinct_labels() == 1).count();
    let combined_tokens = canto.tokens.iter().filter(|t| t.distinct_labels() >= 2).count();
    let isolated_events = canto
        .events
        .iter()
        .filter(|e| e.category == ApostropheCategory::Isolated)
        .count();
    let alphabetic_chars: usize = canto.tokens.iter().map(Token::len_chars).sum();
    let (rate, mean_len) = if token_count == 0 {
        (0.0, 0.0)
    } else {
        (
            100.0 * apostrophe_tokens as f64 / token_count as f64,
            alphabetic_chars as f64 / token_count as f64,
        )
    };
    TokenStats {
        canto: canto.canto,
        token_count,
        apostrophe_tokens,
        combined_tokens,
        isolated_events,
        apostrophe_rate_per_100: rate,
        mean_token_length: mean_len,
        alphabetic_chars,
    }
}

/// Token table: canto, verse (1-based), surface, labels (`+`-joined), span (`start-end` in the raw verse).
pub fn write_tokens_csv<W: Write>(out: W, corpus: &[TokenizedCanto]) -> Result<(), TokenizerError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["canto", "verse", "surface", "labels", "span"])?;
    for canto in corpus {
        for t in &canto.tokens {
            let labels: Vec<&str> = t.labels.iter().map(|l| l.as_str()).collect();
            w.write_record([
                t.canto.to_string(),
                (t.verse + 1).to_string(),
                t.surface.clone(),
                labels.join("+"),
                format!("{}-{}", t.raw_span.0, t.raw_span.1),
            ])?;
        }
    }
    w.flush().map_err(|e| TokenizerError::Csv(e.into()))?;
    Ok(())
}

pub fn write_events_csv<W: Write>(out: W, corpus: &[TokenizedCanto]) -> Result<(), TokenizerError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["canto", "verse", "offset", "left", "right", "category"])?;
    for canto in corpus {
        for e in &canto.events {
            w.write_record([
                e.canto.to_string(),
                (e.verse + 1).to_string(),
                e.char_offset.to_string(),
                e.left.clone(),
                e.right.clone(),
                e.category.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| TokenizerError::Csv(e.into()))?;
    Ok(())
}
