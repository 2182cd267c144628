use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::preprocess::segment_sentences;

pub const TOP_N: usize = 25;

/// Official 2022 Top 25 order, rank 1 first.
pub const TOP25_2022: [&str; TOP_N] = [
    "CWE-787", "CWE-79", "CWE-89", "CWE-20", "CWE-125", "CWE-78", "CWE-416", "CWE-22", "CWE-352",
    "CWE-434", "CWE-476", "CWE-502", "CWE-190", "CWE-287", "CWE-798", "CWE-862", "CWE-77",
    "CWE-306", "CWE-119", "CWE-276", "CWE-918", "CWE-362", "CWE-400", "CWE-611", "CWE-94",
];

const CATALOG_2022_JSON: &str = include_str!("../../data/cwe_catalog_2022.json");

/// Position of a weakness in the Top 25 list, 1 (most dangerous) to 25.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct CweRank(u8);

impl CweRank {
    pub fn new(value: u8) -> Result<Self, CorpusError> {
        if (1..=TOP_N as u8).contains(&value) {
            Ok(Self(value))
        } else {
            Err(CorpusError::RankOutOfRange(value))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based index into per-rank arrays.
    pub fn index(self) -> usize {
        usize::from(self.0) - 1
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < TOP_N, "rank index {index} out of range");
        Self(index as u8 + 1)
    }

    pub fn all() -> impl Iterator<Item = CweRank> {
        (1..=TOP_N as u8).map(CweRank)
    }
}

impl TryFrom<u8> for CweRank {
    type Error = CorpusError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<CweRank> for u8 {
    fn from(rank: CweRank) -> u8 {
        rank.0
    }
}

impl fmt::Display for CweRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CweEntry {
    pub rank: u8,
    pub cwe_id: String,
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub extended_description: String,
    pub cvss_score: f64,
}

/// Name, description and extended description joined into one document,
/// plus its sentence segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollatedCweText {
    pub cwe_id: String,
    pub text: String,
    pub sentences: Vec<String>,
}

/// The 25 weaknesses of one yearly list, indexed by rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    year: String,
    entries: Vec<CweEntry>,
}

impl Catalog {
    /// The shipped 2022 list.
    pub fn top25_2022() -> Self {
        Self::from_json("2022", CATALOG_2022_JSON).expect("shipped catalog is valid")
    }

    pub fn from_json(year: &str, json: &str) -> Result<Self, CorpusError> {
        let entries: Vec<CweEntry> = serde_json::from_str(json)?;
        Self::new(year, entries)
    }

    pub fn load(year: &str, path: &Path) -> Result<Self, CorpusError> {
        let json = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_json(year, &json)
    }

    pub fn new(year: &str, mut entries: Vec<CweEntry>) -> Result<Self, CorpusError> {
        if entries.len() != TOP_N {
            return Err(CorpusError::Catalog(format!(
                "expected {TOP_N} entries, found {}",
                entries.len()
            )));
        }
        entries.sort_by_key(|e| e.rank);
        let mut ids = BTreeSet::new();
        for (i, entry) in entries.iter().enumerate() {
            if usize::from(entry.rank) != i + 1 {
                return Err(CorpusError::Catalog(format!(
                    "ranks must be exactly 1..=25, found {} at position {}",
                    entry.rank,
                    i + 1
                )));
            }
            if !is_cwe_id(&entry.cwe_id) {
                return Err(CorpusError::Catalog(format!(
                    "malformed id {:?}",
                    entry.cwe_id
                )));
            }
            if !ids.insert(entry.cwe_id.as_str()) {
                return Err(CorpusError::Catalog(format!(
                    "duplicate id {}",
                    entry.cwe_id
                )));
            }
            if entry.name.trim().is_empty() {
                return Err(CorpusError::Catalog(format!(
                    "{} has an empty name",
                    entry.cwe_id
                )));
            }
            if !(entry.cvss_score.is_finite() && entry.cvss_score >= 0.0) {
                return Err(CorpusError::Catalog(format!(
                    "{} has invalid score {}",
                    entry.cwe_id, entry.cvss_score
                )));
            }
            if year == "2022" && entry.cwe_id != TOP25_2022[i] {
                return Err(CorpusError::Catalog(format!(
                    "rank {} must be {} in the 2022 list, found {}",
                    i + 1,
                    TOP25_2022[i],
                    entry.cwe_id
                )));
            }
        }
        Ok(Self {
            year: year.to_string(),
            entries,
        })
    }

    pub fn year(&self) -> &str {
        &self.year
    }

    pub fn entries(&self) -> &[CweEntry] {
        &self.entries
    }

    pub fn entry(&self, rank: CweRank) -> &CweEntry {
        &self.entries[rank.index()]
    }

    pub fn cwe_id(&self, rank: CweRank) -> &str {
        &self.entry(rank).cwe_id
    }

    pub fn rank_of(&self, cwe_id: &str) -> Option<CweRank> {
        self.entries
            .iter()
            .position(|e| e.cwe_id.eq_ignore_ascii_case(cwe_id))
            .map(CweRank::from_index)
    }

    /// Concatenated name, description and extended description.
    pub fn collated_text(&self, rank: CweRank) -> String {
        let e = self.entry(rank);
        let mut text = e.name.trim().to_string();
        if !text.ends_with(['.', '!', '?']) {
            text.push('.');
        }
        for part in [&e.description, &e.extended_description] {
            let part = part.trim();
            if !part.is_empty() {
                text.push(' ');
                text.push_str(part);
            }
        }
        text
    }

    pub fn collated(&self, rank: CweRank) -> CollatedCweText {
        let text = self.collated_text(rank);
        CollatedCweText {
            cwe_id: self.cwe_id(rank).to_string(),
            sentences: segment_sentences(&text),
            text,
        }
    }

    pub fn collated_all(&self) -> Vec<CollatedCweText> {
        CweRank::all().map(|r| self.collated(r)).collect()
    }
}

/// `CWE-` followed by one or more digits.
pub fn is_cwe_id(s: &str) -> bool {
    s.strip_prefix("CWE-")
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}
