//! Structured verse corpus: loading, validation against a profile, patching
//! and stable addressing.
//!
//! The canonical input is a JSON array of cantiche:
//!
//! ```json
//! [{"name": "Inferno", "cantos": [{"number": 1, "verses": ["Nel mezzo del cammin ..."]}]}]
//! ```
//!
//! Cantos receive a 1-based `global_index` in reading order. Character
//! offsets everywhere in the crate count Unicode scalar values, not bytes.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation at {node}: {message}")]
    Schema { node: String, message: String },
    #[error("profile violation for {subject}: expected {expected}, found {found}")]
    Profile {
        subject: String,
        expected: String,
        found: String,
    },
    #[error("patch {patch} matched {count} times (expected exactly once)")]
    PatchMatch { patch: String, count: usize },
    #[error("patch {patch} points at a location that does not exist")]
    PatchLocation { patch: String },
}

fn schema(node: impl Into<String>, message: impl Into<String>) -> CorpusError {
    CorpusError::Schema {
        node: node.into(),
        message: message.into(),
    }
}

/// Expected shape of a corpus. An empty `cantica_names` list accepts any
/// non-empty corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusProfile {
    pub cantica_names: Vec<String>,
    pub canto_counts: Vec<usize>,
    pub total_verses: Option<usize>,
}

impl CorpusProfile {
    pub const COMMEDIA_VERSES: usize = 14_233;

    pub fn commedia() -> Self {
        CorpusProfile {
            cantica_names: vec!["Inferno".into(), "Purgatorio".into(), "Paradiso".into()],
            canto_counts: vec![34, 33, 33],
            total_verses: Some(Self::COMMEDIA_VERSES),
        }
    }

    /// Three named cantiche with the Commedia names but free canto/verse counts.
    pub fn tripartite() -> Self {
        CorpusProfile {
            cantica_names: vec!["Inferno".into(), "Purgatorio".into(), "Paradiso".into()],
            canto_counts: Vec::new(),
            total_verses: None,
        }
    }

    pub fn any() -> Self {
        CorpusProfile {
            cantica_names: Vec::new(),
            canto_counts: Vec::new(),
            total_verses: None,
        }
    }

    fn check(&self, doc: &CorpusDocument) -> Result<(), CorpusError> {
        if !self.cantica_names.is_empty() {
            let found: Vec<&str> = doc.cantiche.iter().map(|c| c.name.as_str()).collect();
            if found.len() != self.cantica_names.len() {
                return Err(CorpusError::Profile {
                    subject: "cantiche".into(),
                    expected: format!("{} cantiche", self.cantica_names.len()),
                    found: format!("{} cantiche", found.len()),
                });
            }
            for (want, got) in self.cantica_names.iter().zip(&found) {
                if want != got {
                    return Err(CorpusError::Profile {
                        subject: "cantica name".into(),
                        expected: want.clone(),
                        found: (*got).to_string(),
                    });
                }
            }
        }
        for (cantica, &want) in doc.cantiche.iter().zip(&self.canto_counts) {
            if cantica.cantos.len() != want {
                return Err(CorpusError::Profile {
                    subject: cantica.name.clone(),
                    expected: format!("{want} cantos"),
                    found: format!("{} cantos", cantica.cantos.len()),
                });
            }
        }
        if let Some(want) = self.total_verses {
            let found = doc.verse_count();
            if found != want {
                return Err(CorpusError::Profile {
                    subject: "total verse count".into(),
                    expected: want.to_string(),
                    found: found.to_string(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canto {
    pub cantica: String,
    /// 0-based position of the cantica in the document.
    pub cantica_index: usize,
    /// 1-based number within the cantica.
    pub number: usize,
    /// 1-based position in reading order across the whole document.
    pub global_index: usize,
    pub verses: Vec<String>,
}

impl Canto {
    pub fn label(&self) -> String {
        format!("{} {}", self.cantica, self.number)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cantica {
    pub name: String,
    pub cantos: Vec<Canto>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub cantiche: Vec<Cantica>,
    pub source_id: String,
    pub patch_log: Vec<String>,
}

/// Serialized form of the canonical schema.
#[derive(Serialize)]
struct CanticaOut<'a> {
    name: &'a str,
    cantos: Vec<CantoOut<'a>>,
}

#[derive(Serialize)]
struct CantoOut<'a> {
    number: usize,
    verses: &'a [String],
}

impl CorpusDocument {
    /// Builds a document from `(cantica name, cantos)` where each canto is a
    /// list of verses, numbering cantos 1.. within each cantica.
    pub fn from_parts(source_id: &str, parts: Vec<(String, Vec<Vec<String>>)>) -> Self {
        let mut global = 0;
        let cantiche = parts
            .into_iter()
            .enumerate()
            .map(|(ci, (name, cantos))| Cantica {
                cantos: cantos
                    .into_iter()
                    .enumerate()
                    .map(|(k, verses)| {
                        global += 1;
                        Canto {
                            cantica: name.clone(),
                            cantica_index: ci,
                            number: k + 1,
                            global_index: global,
                            verses,
                        }
                    })
                    .collect(),
                name,
            })
            .collect();
        CorpusDocument {
            cantiche,
            source_id: source_id.to_string(),
            patch_log: Vec::new(),
        }
    }

    pub fn parse(json: &str, source_id: &str, profile: &CorpusProfile) -> Result<Self, CorpusError> {
        let value: Value = serde_json::from_str(json)?;
        let list = value
            .as_array()
            .ok_or_else(|| schema("$", "top level must be a list of cantiche"))?;
        if list.is_empty() {
            return Err(schema("$", "cantiche list is empty"));
        }
        let mut parts = Vec::with_capacity(list.len());
        for (ci, cantica) in list.iter().enumerate() {
            let node = format!("cantiche[{ci}]");
            let obj = cantica
                .as_object()
                .ok_or_else(|| schema(&node, "expected an object"))?;
            let name = obj
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| schema(format!("{node}.name"), "missing or not a string"))?;
            let cantos = obj
                .get("cantos")
                .and_then(Value::as_array)
                .ok_or_else(|| schema(format!("{node}.cantos"), "missing or not a list"))?;
            if cantos.is_empty() {
                return Err(schema(format!("{node}.cantos"), "cantica has no cantos"));
            }
            let mut verses_per_canto = Vec::with_capacity(cantos.len());
            for (k, canto) in cantos.iter().enumerate() {
                let cnode = format!("{node}.cantos[{k}]");
                let number = canto
                    .get("number")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| schema(format!("{cnode}.number"), "missing or not a positive integer"))?;
                if number as usize != k + 1 {
                    return Err(schema(
                        format!("{cnode}.number"),
                        format!("expected canto number {}, found {number}", k + 1),
                    ));
                }
                let verses = canto
                    .get("verses")
                    .and_then(Value::as_array)
                    .ok_or_else(|| schema(format!("{cnode}.verses"), "missing or not a list"))?;
                if verses.is_empty() {
                    return Err(schema(format!("{cnode}.verses"), "canto has no verses"));
                }
                let verses = verses
                    .iter()
                    .enumerate()
                    .map(|(v, verse)| {
                        verse
                            .as_str()
                            .map(str::to_string)
                            .ok_or_else(|| schema(format!("{cnode}.verses[{v}]"), "expected a string"))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                verses_per_canto.push(verses);
            }
            parts.push((name.to_string(), verses_per_canto));
        }
        let doc = CorpusDocument::from_parts(source_id, parts);
        profile.check(&doc)?;
        Ok(doc)
    }

    /// Serializes to the canonical input schema (patch log and source id are
    /// not part of it).
    pub fn to_json(&self) -> String {
        let out: Vec<CanticaOut> = self
            .cantiche
            .iter()
            .map(|c| CanticaOut {
                name: &c.name,
                cantos: c
                    .cantos
                    .iter()
                    .map(|k| CantoOut {
                        number: k.number,
                        verses: &k.verses,
                    })
                    .collect(),
            })
            .collect();
        serde_json::to_string_pretty(&out).expect("corpus serialization cannot fail")
    }

    pub fn cantos(&self) -> impl Iterator<Item = &Canto> {
        self.cantiche.iter().flat_map(|c| c.cantos.iter())
    }

    pub fn canto_count(&self) -> usize {
        self.cantiche.iter().map(|c| c.cantos.len()).sum()
    }

    pub fn verse_count(&self) -> usize {
        self.cantos().map(|c| c.verses.len()).sum()
    }

    pub fn cantica_names(&self) -> Vec<String> {
        self.cantiche.iter().map(|c| c.name.clone()).collect()
    }

    /// Canto by 1-based global index.
    pub fn canto(&self, global_index: usize) -> Option<&Canto> {
        self.cantos().nth(global_index.checked_sub(1)?)
    }

    pub fn apply_patches(mut self, patches: &PatchSet) -> Result<Self, CorpusError> {
        for patch in &patches.0 {
            let verse = self
                .cantiche
                .iter_mut()
                .find(|c| c.name == patch.cantica)
                .and_then(|c| c.cantos.get_mut(patch.canto.checked_sub(1)?))
                .and_then(|k| k.verses.get_mut(patch.verse.checked_sub(1)?))
                .ok_or_else(|| CorpusError::PatchLocation {
                    patch: patch.to_string(),
                })?;
            let count = if patch.pattern.is_empty() {
                0
            } else {
                verse.matches(patch.pattern.as_str()).count()
            };
            if count != 1 {
                return Err(CorpusError::PatchMatch {
                    patch: patch.to_string(),
                    count,
                });
            }
            *verse = verse.replacen(patch.pattern.as_str(), &patch.replacement, 1);
            self.patch_log.push(patch.to_string());
        }
        Ok(self)
    }
}

pub fn load_corpus(path: &Path, profile: &CorpusProfile) -> Result<CorpusDocument, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    CorpusDocument::parse(&text, &path.display().to_string(), profile)
}

/// A single verse-local substitution. `verse` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub cantica: String,
    pub canto: usize,
    pub verse: usize,
    #[serde(rename = "match")]
    pub pattern: String,
    pub replacement: String,
    #[serde(default)]
    pub note: String,
}

impl fmt::Display for Patch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}:{} {:?} -> {:?}",
            self.cantica, self.canto, self.verse, self.pattern, self.replacement
        )?;
        if !self.note.is_empty() {
            write!(f, " ({})", self.note)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatchSet(pub Vec<Patch>);

impl PatchSet {
    pub fn parse(json: &str) -> Result<Self, CorpusError> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
