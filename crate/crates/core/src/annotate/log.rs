use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AnnotateError, Decision};
use crate::corpus::{CveId, CweRank, LabelAssignment};

const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

fn append_line(file: &mut File, path: &Path, value: &impl Serialize) -> Result<(), AnnotateError> {
    let mut line = serde_json::to_vec(value)?;
    line.push(b'\n');
    file.write_all(&line)
        .map_err(|e| AnnotateError::io(path, e))?;
    file.sync_data().map_err(|e| AnnotateError::io(path, e))
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, AnnotateError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(AnnotateError::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AnnotateError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| AnnotateError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

fn open_append(path: &Path) -> Result<File, AnnotateError> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| AnnotateError::io(path, e))
}

/// Append-only JSONL of accepted decisions, synced after every line.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    pub fn open(path: &Path) -> Result<Self, AnnotateError> {
        Ok(Self {
            path: path.to_path_buf(),
            file: open_append(path)?,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, decision: &Decision) -> Result<(), AnnotateError> {
        append_line(&mut self.file, &self.path, decision)
    }
}

/// Decisions in journal order; a missing file reads as empty.
pub fn read_journal(path: &Path) -> Result<Vec<Decision>, AnnotateError> {
    read_lines(path)
}

/// What the model suggested next to what the annotator decided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub cve_id: CveId,
    /// Ranks as shown, best first.
    pub model_ranking: Vec<CweRank>,
    /// Absent when the record was marked unmappable.
    pub human_labels: Option<LabelAssignment>,
    pub accepted_top1: bool,
    pub timestamp: DateTime<Utc>,
}

impl FeedbackEvent {
    pub fn new(
        cve_id: CveId,
        model_ranking: Vec<CweRank>,
        human_labels: Option<LabelAssignment>,
        timestamp: DateTime<Utc>,
    ) -> Self {
        let accepted_top1 = match (&human_labels, model_ranking.first()) {
            (Some(l), Some(&top)) => l.head() == top,
            _ => false,
        };
        Self {
            cve_id,
            model_ranking,
            human_labels,
            accepted_top1,
            timestamp,
        }
    }
}

/// One line of the feedback log, chained to its predecessor by hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    #[serde(flatten)]
    pub event: FeedbackEvent,
    pub prev_hash: String,
    pub hash: String,
}

fn chain_hash(prev: &str, event: &FeedbackEvent) -> Result<String, AnnotateError> {
    let mut hasher = Sha256::new();
    hasher.update(prev.as_bytes());
    hasher.update(serde_json::to_vec(event)?);
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug)]
pub struct FeedbackLog {
    path: PathBuf,
    file: File,
    head: String,
    len: usize,
}

impl FeedbackLog {
    /// Opens for appending after checking the existing chain.
    pub fn open(path: &Path) -> Result<Self, AnnotateError> {
        let records = verify_records(path)?;
        let head = records
            .last()
            .map_or_else(|| GENESIS.to_string(), |r| r.hash.clone());
        Ok(Self {
            path: path.to_path_buf(),
            file: open_append(path)?,
            head,
            len: records.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn append(&mut self, event: FeedbackEvent) -> Result<FeedbackRecord, AnnotateError> {
        let hash = chain_hash(&self.head, &event)?;
        let record = FeedbackRecord {
            event,
            prev_hash: self.head.clone(),
            hash,
        };
        append_line(&mut self.file, &self.path, &record)?;
        self.head = record.hash.clone();
        self.len += 1;
        Ok(record)
    }
}

fn verify_records(path: &Path) -> Result<Vec<FeedbackRecord>, AnnotateError> {
    let records: Vec<FeedbackRecord> = read_lines(path)?;
    let mut prev = GENESIS.to_string();
    for (i, r) in records.iter().enumerate() {
        if r.prev_hash != prev || chain_hash(&prev, &r.event)? != r.hash {
            return Err(AnnotateError::BrokenChain {
                path: path.to_path_buf(),
                line: i + 1,
            });
        }
        prev = r.hash.clone();
    }
    Ok(records)
}

/// Checks every link and returns the number of events.
pub fn verify_feedback_log(path: &Path) -> Result<usize, AnnotateError> {
    verify_records(path).map(|r| r.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{Action, AnnotatorId};

    fn event(i: u8) -> FeedbackEvent {
        FeedbackEvent::new(
            CveId::parse(&format!("CVE-2021-{i:04}")).unwrap(),
            CweRank::all().collect(),
            Some(LabelAssignment::single(CweRank::new(i).unwrap())),
            DateTime::UNIX_EPOCH,
        )
    }

    #[test]
    fn accepted_top1_compares_heads() {
        assert!(event(1).accepted_top1);
        assert!(!event(2).accepted_top1);
        let unmappable = FeedbackEvent::new(
            event(1).cve_id,
            CweRank::all().collect(),
            None,
            DateTime::UNIX_EPOCH,
        );
        assert!(!unmappable.accepted_top1);
    }

    #[test]
    fn chain_survives_reopen_and_detects_edits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feedback.jsonl");
        let mut log = FeedbackLog::open(&path).unwrap();
        log.append(event(1)).unwrap();
        log.append(event(2)).unwrap();
        drop(log);
        let mut log = FeedbackLog::open(&path).unwrap();
        assert_eq!(log.len(), 2);
        log.append(event(3)).unwrap();
        assert_eq!(verify_feedback_log(&path).unwrap(), 3);

        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replacen("\"accepted_top1\":false", "\"accepted_top1\":true", 1);
        assert_ne!(text, tampered);
        std::fs::write(&path, tampered).unwrap();
        assert!(matches!(
            verify_feedback_log(&path),
            Err(AnnotateError::BrokenChain { line: 2, .. })
        ));
        assert!(FeedbackLog::open(&path).is_err());

        let lines: Vec<&str> = text.lines().collect();
        std::fs::write(&path, format!("{}\n{}\n", lines[0], lines[2])).unwrap();
        assert!(matches!(
            verify_feedback_log(&path),
            Err(AnnotateError::BrokenChain { line: 2, .. })
        ));
    }

    #[test]
    fn journal_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        assert!(read_journal(&path).unwrap().is_empty());
        let d = Decision {
            cve_id: CveId::parse("CVE-2021-0001").unwrap(),
            annotator: AnnotatorId::new("A"),
            action: Action::Causal,
            labels: Some("20-14".parse().unwrap()),
            task_version: 0,
            timestamp: DateTime::UNIX_EPOCH,
        };
        let mut j = Journal::open(&path).unwrap();
        j.append(&d).unwrap();
        j.append(&Decision {
            action: Action::Agree,
            labels: None,
            task_version: 1,
            ..d.clone()
        })
        .unwrap();
        let back = read_journal(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], d);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().find("labels").is_none());
    }
}
