//! Vowel–consonant Markov analysis of verse corpora.
//!
//! The pipeline runs bottom-up: [`corpus`] loads and patches the structured
//! text, [`tokenizer`] classifies apostrophes and segments tokens,
//! [`vc`] encodes each canto as a V/C symbol stream with provenance,
//! [`markov`] fits two- and four-state chains and the dispersion index,
//! [`probes`] screens letter trigrams, [`classify`] runs the elastic-net
//! multinomial classifier, and [`anchors`] links probes to top terms.
//! [`stats`] holds the rank-based tests shared by all of them.

pub mod corpus;
pub mod tokenizer;
pub mod vc;
pub mod markov;
pub mod probes;
pub mod classify;
pub mod anchors;
pub mod stats;
