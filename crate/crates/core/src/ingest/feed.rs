use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use walkdir::WalkDir;

use super::IngestError;
use crate::corpus::{CveId, CveRecord, RecordState};

/// One feed document with the fields the pipeline uses pulled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedRecord {
    pub cve_id: CveId,
    pub title: String,
    pub description: String,
    pub state: RecordState,
    pub assigner: Option<String>,
    pub reference_urls: Vec<String>,
    pub source: PathBuf,
    pub raw: Value,
}

impl FeedRecord {
    pub fn to_cve_record(&self) -> CveRecord {
        CveRecord {
            cve_id: self.cve_id.clone(),
            title: self.title.clone(),
            description: self.description.clone(),
            state: self.state,
            nvd_labels: Default::default(),
        }
    }
}

/// A feed file that did not yield a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct FeedScan {
    pub records: Vec<FeedRecord>,
    pub skipped: Vec<SkippedFile>,
    /// Well-formed records outside the year range.
    pub out_of_range: usize,
}

/// Default year window: the two years behind the 2022 list.
pub const DEFAULT_YEARS: RangeInclusive<u16> = 2020..=2021;

/// Walks a cvelist checkout and extracts every well-formed record whose id
/// falls in `years`. Unreadable or malformed files are skipped and logged.
/// Records come back sorted by id; a repeated id keeps its first file in
/// path order.
pub fn parse_feed(dir: &Path, years: RangeInclusive<u16>) -> Result<FeedScan, IngestError> {
    if !dir.is_dir() {
        return Err(IngestError::NotADirectory(dir.to_path_buf()));
    }
    let mut scan = FeedScan::default();
    let mut by_id: BTreeMap<CveId, FeedRecord> = BTreeMap::new();
    let walker = WalkDir::new(dir).sort_by_file_name().into_iter();
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                let path = e
                    .path()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| dir.to_path_buf());
                skip(&mut scan, path, e.to_string());
                continue;
            }
        };
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().is_none_or(|ext| ext != "json") {
            continue;
        }
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                skip(&mut scan, path.to_path_buf(), format!("unreadable: {e}"));
                continue;
            }
        };
        let record = match parse_record(&text, path) {
            Ok(r) => r,
            Err(reason) => {
                skip(&mut scan, path.to_path_buf(), reason);
                continue;
            }
        };
        if !years.contains(&record.cve_id.year()) {
            scan.out_of_range += 1;
            continue;
        }
        if by_id.contains_key(&record.cve_id) {
            let reason = format!("duplicate of an earlier {}", record.cve_id);
            skip(&mut scan, path.to_path_buf(), reason);
            continue;
        }
        by_id.insert(record.cve_id.clone(), record);
    }
    scan.records = by_id.into_values().collect();
    Ok(scan)
}

fn skip(scan: &mut FeedScan, path: PathBuf, reason: String) {
    log::warn!("skipping {}: {reason}", path.display());
    scan.skipped.push(SkippedFile { path, reason });
}

/// Parses one document in either the 4.0 or the 5.x record schema.
pub fn parse_record(text: &str, source: &Path) -> Result<FeedRecord, String> {
    let raw: Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let fields = if raw.get("cveMetadata").is_some() {
        v5_fields(&raw)?
    } else if raw.get("CVE_data_meta").is_some() {
        v4_fields(&raw)?
    } else {
        return Err("neither a 4.0 nor a 5.x CVE record".into());
    };
    let cve_id = CveId::parse(&fields.id).map_err(|e| e.to_string())?;
    let description = fields.description.unwrap_or_default().trim().to_string();
    if description.is_empty() {
        return Err(format!("{cve_id} has no description"));
    }
    Ok(FeedRecord {
        cve_id,
        title: fields.title.unwrap_or_default().trim().to_string(),
        description,
        state: fields.state,
        assigner: fields.assigner,
        reference_urls: fields.urls,
        source: source.to_path_buf(),
        raw,
    })
}

struct Fields {
    id: String,
    title: Option<String>,
    description: Option<String>,
    state: RecordState,
    assigner: Option<String>,
    urls: Vec<String>,
}

fn str_at<'a>(v: &'a Value, pointer: &str) -> Option<&'a str> {
    v.pointer(pointer).and_then(Value::as_str)
}

/// English entry of a `[{lang, value}]` array, else the first one.
fn english(entries: Option<&Value>) -> Option<String> {
    let list = entries?.as_array()?;
    let is_en = |e: &&Value| {
        e.get("lang").and_then(Value::as_str).is_some_and(|l| {
            l.eq_ignore_ascii_case("en") || l.eq_ignore_ascii_case("eng") || l.starts_with("en-")
        })
    };
    list.iter()
        .find(is_en)
        .or_else(|| list.first())
        .and_then(|e| e.get("value"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

fn urls(list: Option<&Value>) -> Vec<String> {
    list.and_then(Value::as_array)
        .map(|refs| {
            refs.iter()
                .filter_map(|r| r.get("url").and_then(Value::as_str).map(str::to_string))
                .collect()
        })
        .unwrap_or_default()
}

fn v4_fields(raw: &Value) -> Result<Fields, String> {
    let id = str_at(raw, "/CVE_data_meta/ID").ok_or("missing CVE_data_meta.ID")?;
    let state = match str_at(raw, "/CVE_data_meta/STATE").unwrap_or("PUBLIC") {
        "PUBLIC" => RecordState::Accepted,
        "REJECT" | "REJECTED" => RecordState::Rejected,
        "RESERVED" => RecordState::Reserved,
        _ => RecordState::Other,
    };
    Ok(Fields {
        id: id.to_string(),
        title: str_at(raw, "/CVE_data_meta/TITLE").map(str::to_string),
        description: english(raw.pointer("/description/description_data")),
        state,
        assigner: str_at(raw, "/CVE_data_meta/ASSIGNER").map(str::to_string),
        urls: urls(raw.pointer("/references/reference_data")),
    })
}

fn v5_fields(raw: &Value) -> Result<Fields, String> {
    let id = str_at(raw, "/cveMetadata/cveId").ok_or("missing cveMetadata.cveId")?;
    let state = match str_at(raw, "/cveMetadata/state").ok_or("missing cveMetadata.state")? {
        "PUBLISHED" => RecordState::Accepted,
        "REJECTED" => RecordState::Rejected,
        "RESERVED" => RecordState::Reserved,
        _ => RecordState::Other,
    };
    let cna = raw.pointer("/containers/cna");
    let description = english(cna.and_then(|c| c.get("descriptions")))
        .or_else(|| english(cna.and_then(|c| c.get("rejectedReasons"))));
    Ok(Fields {
        id: id.to_string(),
        title: cna
            .and_then(|c| c.get("title"))
            .and_then(Value::as_str)
            .map(str::to_string),
        description,
        state,
        assigner: str_at(raw, "/cveMetadata/assignerShortName").map(str::to_string),
        urls: urls(cna.and_then(|c| c.get("references"))),
    })
}

/// Keeps accepted records, ordered by id.
pub fn filter_accepted(records: Vec<FeedRecord>) -> Vec<FeedRecord> {
    let mut kept: Vec<FeedRecord> = records
        .into_iter()
        .filter(|r| r.state == RecordState::Accepted)
        .collect();
    kept.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));
    kept
}
