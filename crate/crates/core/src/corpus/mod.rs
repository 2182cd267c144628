//! Domain types, the Top 25 catalog, the label grammar and dataset files.

mod catalog;
mod dataset;
mod label;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use catalog::{is_cwe_id, Catalog, CollatedCweText, CweEntry, CweRank, TOP25_2022, TOP_N};
pub use dataset::{
    dataset_stats, load_dataset, load_dataset_jsonl, read_dataset, save_dataset,
    save_dataset_jsonl, write_dataset, write_dataset_jsonl, DatasetRow, DatasetStats, LabelCount,
};
pub use label::{format_label, parse_label, LabelAssignment, LabelError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("rank {0} is outside 1..=25")]
    RankOutOfRange(u8),
    #[error("invalid catalog: {0}")]
    Catalog(String),
    #[error("invalid CVE id {0:?}")]
    CveId(String),
    #[error("line {line}: {source}")]
    Label { line: usize, source: LabelError },
    #[error("line {line}: duplicate cve_id {cve_id}")]
    DuplicateCve { line: usize, cve_id: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("write failed: {0}")]
    Write(std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A `CVE-YYYY-NNNN` identifier. Orders by year, then numerically by suffix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CveId {
    year: u16,
    number: u64,
    text: String,
}

impl CveId {
    pub fn parse(s: &str) -> Result<Self, CorpusError> {
        let bad = || CorpusError::CveId(s.to_string());
        let rest = s.strip_prefix("CVE-").ok_or_else(bad)?;
        let (year, number) = rest.split_once('-').ok_or_else(bad)?;
        let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
        if year.len() != 4 || !digits(year) || number.len() < 4 || !digits(number) {
            return Err(bad());
        }
        Ok(Self {
            year: year.parse().map_err(|_| bad())?,
            number: number.parse().map_err(|_| bad())?,
            text: s.to_string(),
        })
    }

    pub fn year(&self) -> u16 {
        self.year
    }

    pub fn number(&self) -> u64 {
        self.number
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

impl Ord for CveId {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.year, self.number, &self.text).cmp(&(other.year, other.number, &other.text))
    }
}

impl PartialOrd for CveId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl FromStr for CveId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for CveId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for CveId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordState {
    Accepted,
    Rejected,
    Reserved,
    Other,
}

/// One vulnerability record as used by the rankers and the annotation pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveRecord {
    pub cve_id: CveId,
    #[serde(default)]
    pub title: String,
    pub description: String,
    pub state: RecordState,
    #[serde(default)]
    pub nvd_labels: BTreeSet<String>,
}

impl CveRecord {
    /// Description followed by title: the text every ranker treats as the query.
    pub fn query_text(&self) -> String {
        let title = self.title.trim();
        if title.is_empty() {
            self.description.trim().to_string()
        } else {
            format!("{} {}", self.description.trim(), title)
        }
    }
}

/// Reads one `CveRecord` JSON object per line.
pub fn load_records(path: &Path) -> Result<Vec<CveRecord>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(records)
}

pub fn save_records(records: &[CveRecord], path: &Path) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n").map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cve_id_parses_year_and_suffix() {
        let id = CveId::parse("CVE-2020-13821").unwrap();
        assert_eq!(id.year(), 2020);
        assert_eq!(id.number(), 13821);
        assert_eq!(id.to_string(), "CVE-2020-13821");
        assert!(CveId::parse("CVE-20-1").is_err());
        assert!(CveId::parse("CVE-2020-123").is_err());
        assert!(CveId::parse("cve-2020-1234").is_err());
        assert!(CveId::parse("CVE-2020-12a4").is_err());
    }

    #[test]
    fn cve_ids_order_numerically() {
        let a = CveId::parse("CVE-2020-9999").unwrap();
        let b = CveId::parse("CVE-2020-13821").unwrap();
        let c = CveId::parse("CVE-2021-0001").unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn query_text_is_description_then_title() {
        let record = CveRecord {
            cve_id: CveId::parse("CVE-2021-0001").unwrap(),
            title: "Title".into(),
            description: "Desc.".into(),
            state: RecordState::Accepted,
            nvd_labels: BTreeSet::new(),
        };
        assert_eq!(record.query_text(), "Desc. Title");
    }

    #[test]
    fn records_round_trip_as_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let records = vec![CveRecord {
            cve_id: CveId::parse("CVE-2020-13821").unwrap(),
            title: String::new(),
            description: "XSS in admin page.".into(),
            state: RecordState::Accepted,
            nvd_labels: ["CWE-79".to_string()].into_iter().collect(),
        }];
        save_records(&records, &path).unwrap();
        assert_eq!(load_records(&path).unwrap(), records);
    }
}
