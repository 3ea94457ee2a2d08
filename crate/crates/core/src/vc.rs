//! V/C encoding of cleaned text and letter-trigram extraction.
//!
//! The symbol stream of a canto runs across verse and word boundaries with no
//! separator symbol. Each symbol keeps a back-pointer to the character it came
//! from, the token that holds it, and the verse.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Canto;
use crate::tokenizer::{lower, Token};

#[derive(Debug, Error)]
pub enum VcError {
    #[error("character {0:?} is not alphabetic")]
    NotAlphabetic(char),
    #[error("canto {0} has no alphabetic characters")]
    EmptyCanto(usize),
    #[error("token {token} does not fit verse {verse} of canto {canto}")]
    TokenMismatch { canto: usize, verse: usize, token: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    V,
    C,
}

impl Symbol {
    pub fn flip(self) -> Symbol {
        match self {
            Symbol::V => Symbol::C,
            Symbol::C => Symbol::V,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Symbol::V => 'V',
            Symbol::C => 'C',
        }
    }

    /// Parses a string of `V`/`C` letters (test and fixture helper).
    pub fn parse_seq(s: &str) -> Vec<Symbol> {
        s.chars()
            .map(|c| match c {
                'V' | 'v' => Symbol::V,
                'C' | 'c' => Symbol::C,
                other => panic!("not a V/C symbol: {other:?}"),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharClassTable {
    /// Lowercase vowels; lookup is case-insensitive.
    pub vowels: BTreeSet<char>,
}

impl Default for CharClassTable {
    fn default() -> Self {
        CharClassTable {
            vowels: "aeiouàèéìíîòóùúëïüäö".chars().collect(),
        }
    }
}

impl CharClassTable {
    pub fn classify(&self, c: char) -> Result<Symbol, VcError> {
        if !c.is_alphabetic() {
            return Err(VcError::NotAlphabetic(c));
        }
        Ok(if self.vowels.contains(&lower(c)) {
            Symbol::V
        } else {
            Symbol::C
        })
    }
}

pub fn classify_char(c: char, table: &CharClassTable) -> Result<Symbol, VcError> {
    table.classify(c)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSequence {
    pub canto: usize,
    pub symbols: Vec<Symbol>,
    /// Original characters (case preserved).
    pub chars: Vec<char>,
    /// Index into the canto's token list.
    pub token_ids: Vec<u32>,
    /// Character position inside the token surface.
    pub offsets: Vec<u32>,
    /// 0-based verse index.
    pub verses: Vec<u32>,
}

impl SymbolSequence {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Lowercased characters, concatenated.
    pub fn decode(&self) -> String {
        self.chars.iter().map(|&c| lower(c)).collect()
    }
}

pub fn encode_canto(canto: &Canto, tokens: &[Token], table: &CharClassTable) -> Result<SymbolSequence, VcError> {
    let verse_chars: Vec<Vec<char>> = canto.verses.iter().map(|v| v.chars().collect()).collect();
    let n: usize = tokens.iter().map(Token::len_chars).sum();
    let mut seq = SymbolSequence {
        canto: canto.global_index,
        symbols: Vec::with_capacity(n),
        chars: Vec::with_capacity(n),
        token_ids: Vec::with_capacity(n),
        offsets: Vec::with_capacity(n),
        verses: Vec::with_capacity(n),
    };
    for (id, tok) in tokens.iter().enumerate() {
        let slice = verse_chars
            .get(tok.verse)
            .and_then(|v| v.get(tok.raw_span.0..tok.raw_span.1))
            .ok_or(VcError::TokenMismatch {
                canto: canto.global_index,
                verse: tok.verse,
                token: id,
            })?;
        for (k, &c) in slice.iter().enumerate() {
            seq.symbols.push(table.classify(c)?);
            seq.chars.push(c);
            seq.token_ids.push(id as u32);
            seq.offsets.push(k as u32);
            seq.verses.push(tok.verse as u32);
        }
    }
    if seq.is_empty() {
        return Err(VcError::EmptyCanto(canto.global_index));
    }
    Ok(seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VcPattern {
    CCC,
    CCV,
    CVC,
    CVV,
    VCC,
    VCV,
    VVC,
    VVV,
}

impl VcPattern {
    pub const ALL: [VcPattern; 8] = [
        VcPattern::CCC,
        VcPattern::CCV,
        VcPattern::CVC,
        VcPattern::CVV,
        VcPattern::VCC,
        VcPattern::VCV,
        VcPattern::VVC,
        VcPattern::VVV,
    ];

    pub fn from_symbols(a: Symbol, b: Symbol, c: Symbol) -> VcPattern {
        use Symbol::*;
        match (a, b, c) {
            (C, C, C) => VcPattern::CCC,
            (C, C, V) => VcPattern::CCV,
            (C, V, C) => VcPattern::CVC,
            (C, V, V) => VcPattern::CVV,
            (V, C, C) => VcPattern::VCC,
            (V, C, V) => VcPattern::VCV,
            (V, V, C) => VcPattern::VVC,
            (V, V, V) => VcPattern::VVV,
        }
    }

    pub fn class(self) -> VcClass {
        use VcPattern::*;
        match self {
            CCC | VVV => VcClass::Zero,
            CCV | VVC => VcClass::OneEnd,
            CVV | VCC => VcClass::OneStart,
            CVC | VCV => VcClass::Two,
        }
    }

    pub fn as_str(self) -> &'static str {
        use VcPattern::*;
        match self {
            CCC => "CCC",
            CCV => "CCV",
            CVC => "CVC",
            CVV => "CVV",
            VCC => "VCC",
            VCV => "VCV",
            VVC => "VVC",
            VVV => "VVV",
        }
    }
}

impl fmt::Display for VcPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Number and position of V/C transitions inside a trigram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VcClass {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1E")]
    OneEnd,
    #[serde(rename = "1S")]
    OneStart,
    #[serde(rename = "2")]
    Two,
}

impl VcClass {
    pub const ALL: [VcClass; 4] = [VcClass::Zero, VcClass::OneEnd, VcClass::OneStart, VcClass::Two];

    pub fn as_str(self) -> &'static str {
        match self {
            VcClass::Zero => "0",
            VcClass::OneEnd => "1E",
            VcClass::OneStart => "1S",
            VcClass::Two => "2",
        }
    }
}

impl fmt::Display for VcClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrigramOccurrence {
    pub letters: String,
    pub pattern: VcPattern,
    pub canto: usize,
    /// Index of the first symbol in the canto's sequence.
    pub position: usize,
    pub single_word: bool,
    pub crosses_verse: bool,
}

impl TrigramOccurrence {
    pub fn class(&self) -> VcClass {
        self.pattern.class()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Keep windows spanning two verses.
    pub cross_verses: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { cross_verses: true }
    }
}

/// Overlapping width-3 windows over the sequence.
pub fn trigram_scan(seq: &SymbolSequence, opts: ScanOptions) -> Vec<TrigramOccurrence> {
    if seq.len() < 3 {
        return Vec::new();
    }
    (0..seq.len() - 2)
        .filter_map(|i| {
            let crosses_verse = seq.verses[i] != seq.verses[i + 2];
            if crosses_verse && !opts.cross_verses {
                return None;
            }
            let letters: String = seq.chars[i..i + 3].iter().map(|&c| lower(c)).collect();
            Some(TrigramOccurrence {
                letters,
                pattern: VcPattern::from_symbols(seq.symbols[i], seq.symbols[i + 1], seq.symbols[i + 2]),
                canto: seq.canto,
                position: i,
                single_word: seq.token_ids[i] == seq.token_ids[i + 2],
                crosses_verse,
            })
        })
        .collect()
}

pub fn write_symbols_csv<W: Write>(out: W, seqs: &[SymbolSequence]) -> Result<(), VcError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["canto", "position", "char", "symbol", "token", "verse"])?;
    for s in seqs {
        for i in 0..s.len() {
            w.write_record([
                s.canto.to_string(),
                i.to_string(),
                s.chars[i].to_string(),
                s.symbols[i].as_char().to_string(),
                s.token_ids[i].to_string(),
                (s.verses[i] + 1).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| VcError::Csv(e.into()))?;
    Ok(())
}

pub fn write_trigrams_csv<W: Write>(out: W, occurrences: &[TrigramOccurrence]) -> Result<(), VcError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["canto", "position", "letters", "pattern", "class", "single_word"])?;
    for o in occurrences {
        w.write_record([
            o.canto.to_string(),
            o.position.to_string(),
            o.letters.clone(),
            o.pattern.to_string(),
            o.class().to_string(),
            o.single_word.to_string(),
        ])?;
    }
    w.flush().map_err(|e| VcError::Csv(e.into()))?;
    Ok(())
}
