use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_label, Catalog, CorpusError, CveId, CweRank, LabelAssignment, TOP_N};

/// One released dataset row: a CVE and its label or causal chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub cve_id: CveId,
    #[serde(rename = "labels")]
    pub assignment: LabelAssignment,
}

impl DatasetRow {
    pub fn new(cve_id: CveId, assignment: LabelAssignment) -> Self {
        Self { cve_id, assignment }
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    cve_id: String,
    labels: String,
}

/// Reads the two-column `cve_id,labels` CSV. Duplicate ids are rejected.
pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<DatasetRow>, CorpusError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "cve_id" || &headers[1] != "labels" {
        return Err(CorpusError::Malformed {
            line: 1,
            message: format!(
                "expected header `cve_id,labels`, found `{}`",
                join(&headers)
            ),
        });
    }
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for (i, record) in csv.deserialize::<CsvRow>().enumerate() {
        let line = i + 2;
        let record = record?;
        let cve_id = CveId::parse(record.cve_id.trim()).map_err(|e| CorpusError::Malformed {
            line,
            message: e.to_string(),
        })?;
        let assignment = parse_label(record.labels.trim())
            .map_err(|source| CorpusError::Label { line, source })?;
        if !seen.insert(cve_id.clone()) {
            return Err(CorpusError::DuplicateCve {
                line,
                cve_id: cve_id.to_string(),
            });
        }
        rows.push(DatasetRow { cve_id, assignment });
    }
    Ok(rows)
}

fn join(record: &csv::StringRecord) -> String {
    record.iter().collect::<Vec<_>>().join(",")
}

pub fn write_dataset<W: Write>(rows: &[DatasetRow], writer: W) -> Result<(), CorpusError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["cve_id", "labels"])?;
    for row in rows {
        csv.write_record([row.cve_id.as_str(), &row.assignment.to_string()])?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRow>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_dataset(BufReader::new(file))
}

pub fn save_dataset(rows: &[DatasetRow], path: &Path) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    write_dataset(rows, std::io::BufWriter::new(file))
}

/// JSONL mirror, one `{cve_id, labels}` object per line. Unlike the CSV form,
/// a CVE may appear on several lines to carry unrelated labels.
pub fn load_dataset_jsonl(path: &Path) -> Result<Vec<DatasetRow>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_text = line.map_err(|e| CorpusError::io(path, e))?;
        if line_text.trim().is_empty() {
            continue;
        }
        let row: DatasetRow =
            serde_json::from_str(&line_text).map_err(|e| CorpusError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_dataset_jsonl<W: Write>(rows: &[DatasetRow], writer: W) -> Result<(), CorpusError> {
    let mut out = std::io::BufWriter::new(writer);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n").map_err(CorpusError::Write)?;
    }
    out.flush().map_err(CorpusError::Write)
}

pub fn save_dataset_jsonl(rows: &[DatasetRow], path: &Path) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    write_dataset_jsonl(rows, file)
}

/// Totals plus per-rank counts over single-label rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub single_count: usize,
    pub causal_count: usize,
    pub per_label_counts: [usize; TOP_N],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCount {
    pub rank: u8,
    pub cwe_id: String,
    pub name: String,
    pub count: usize,
}

impl DatasetStats {
    pub fn count(&self, rank: CweRank) -> usize {
        self.per_label_counts[rank.index()]
    }

    pub fn label_counts(&self, catalog: &Catalog) -> Vec<LabelCount> {
        CweRank::all()
            .map(|rank| {
                let entry = catalog.entry(rank);
                LabelCount {
                    rank: rank.get(),
                    cwe_id: entry.cwe_id.clone(),
                    name: entry.name.clone(),
                    count: self.count(rank),
                }
            })
            .collect()
    }

    /// Plain-text report: totals line, then one line per rank.
    pub fn render(&self, catalog: &Catalog) -> String {
        let mut out = format!(
            "total\t{}\nsingle\t{}\ncausal\t{}\n",
            self.total, self.single_count, self.causal_count
        );
        for c in self.label_counts(catalog) {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                c.rank, c.cwe_id, c.count, c.name
            ));
        }
        out
    }
}

pub fn dataset_stats(rows: &[DatasetRow]) -> DatasetStats {
    let mut stats = DatasetStats {
        total: rows.len(),
        single_count: 0,
        causal_count: 0,
        per_label_counts: [0; TOP_N],
    };
    for row in rows {
        if row.assignment.is_single() {
            stats.single_count += 1;
            stats.per_label_counts[row.assignment.head().index()] += 1;
        } else {
            stats.causal_count += 1;
        }
    }
    stats
}
