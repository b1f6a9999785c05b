//! Dataset manifests: a line-oriented index of sample records with a dense
//! class vocabulary derived from the label codes.
//!
//! One entry per line, tab-separated: `path  offset  label_code  writer_id  split`.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
    Adapt,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Adapt => "adapt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "adapt" => Ok(Split::Adapt),
            other => Err(Error::Format(format!("unknown split tag {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Container path, relative to the manifest file.
    pub path: String,
    /// Byte offset of the record inside the container.
    pub offset: u64,
    /// Label code as stored in the container tag (GNT: 2 bytes zero-extended,
    /// POT: 4 tag bytes read little-endian).
    pub code: u32,
    pub writer: u32,
    pub split: Split,
}

/// Index of a dataset plus its class vocabulary. Class indices are assigned
/// densely by sorting the distinct label codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
    vocab: BTreeMap<u32, u32>,
}

impl Manifest {
    /// Build a manifest, deriving the vocabulary from the entries themselves.
    pub fn build(entries: Vec<ManifestEntry>) -> Self {
        let mut vocab = BTreeMap::new();
        for e in &entries {
            vocab.entry(e.code).or_insert(0);
        }
        for (i, v) in vocab.values_mut().enumerate() {
            *v = i as u32;
        }
        Manifest { entries, vocab }
    }

    /// Build against a fixed vocabulary; entries with unknown codes are
    /// rejected.
    pub fn build_with_vocab(entries: Vec<ManifestEntry>, codes: &[u32]) -> Result<Self> {
        let mut sorted: Vec<u32> = codes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let vocab: BTreeMap<u32, u32> = sorted
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32))
            .collect();
        for e in &entries {
            if !vocab.contains_key(&e.code) {
                return Err(Error::Format(format!(
                    "label code {:#06x} in {} is not in the vocabulary",
                    e.code, e.path
                )));
            }
        }
        Ok(Manifest { entries, vocab })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn class_count(&self) -> usize {
        self.vocab.len()
    }

    /// Dense class index for a label code.
    pub fn class_of(&self, code: u32) -> Option<u32> {
        self.vocab.get(&code).copied()
    }

    /// Codes in vocabulary order (index -> code).
    pub fn codes(&self) -> Vec<u32> {
        self.vocab.keys().copied().collect()
    }

    /// Distinct writers appearing in a split, ascending.
    pub fn writers_in(&self, split: Split) -> Vec<u32> {
        let mut w: Vec<u32> = self
            .entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.writer)
            .collect();
        w.sort_unstable();
        w.dedup();
        w
    }

    /// Entry indices belonging to a split.
    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                e.path, e.offset, e.code, e.writer, e.split
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::Format(format!(
                    "manifest line {}: expected 5 tab-separated fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let bad = |what: &str| {
                Error::Format(format!("manifest line {}: bad {what}", lineno + 1))
            };
            entries.push(ManifestEntry {
                path: fields[0].to_string(),
                offset: fields[1].parse().map_err(|_| bad("offset"))?,
                code: fields[2].parse().map_err(|_| bad("label code"))?,
                writer: fields[3].parse().map_err(|_| bad("writer id"))?,
                split: Split::parse(fields[4])?,
            });
        }
        Ok(Manifest::build(entries))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}
