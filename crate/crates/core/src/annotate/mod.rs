//! Three-annotator labelling workflow.
//!
//! Records are split round-robin between three annotators. Each block is
//! reviewed by the next annotator, and disagreements go to the third. Every
//! decision is journaled before it takes effect.

mod log;
mod workflow;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Catalog, CveId, CveRecord, CweRank, DatasetRow, LabelAssignment};
use crate::rank::RankedList;

pub use log::{
    read_journal, verify_feedback_log, FeedbackEvent, FeedbackLog, FeedbackRecord, Journal,
};
pub use workflow::{AssistFn, StatusCounts, Workflow};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("expected exactly 3 annotators, got {0}")]
    AnnotatorCount(usize),
    #[error("annotator {0} listed twice")]
    DuplicateAnnotator(AnnotatorId),
    #[error("no records to assign")]
    NoRecords,
    #[error("{0} listed twice")]
    DuplicateCve(CveId),
    #[error("unknown annotator {0}")]
    UnknownAnnotator(AnnotatorId),
    #[error("no task for {0}")]
    UnknownTask(String),
    #[error("{cve_id}: waiting on {expected}, not {got}")]
    WrongActor {
        cve_id: CveId,
        expected: AnnotatorId,
        got: AnnotatorId,
    },
    #[error("{cve_id}: task is at version {current}, decision was made on {submitted}")]
    StaleVersion {
        cve_id: CveId,
        current: u64,
        submitted: u64,
    },
    #[error("{cve_id}: task is already {status}")]
    Closed { cve_id: CveId, status: TaskStatus },
    #[error("{cve_id}: {message}")]
    InvalidDecision { cve_id: CveId, message: String },
    #[error("{path} line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path} line {line}: hash chain broken")]
    BrokenChain { path: PathBuf, line: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AnnotateError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnnotatorId(String);

impl AnnotatorId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AnnotatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Who labels, reviews and, on disagreement, adjudicates one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roles {
    pub annotator: AnnotatorId,
    pub reviewer: AnnotatorId,
    pub adjudicator: AnnotatorId,
}

/// Round-robin over the sorted ids: record `i` goes to annotator `i mod 3`,
/// is reviewed by the next one and adjudicated by the remaining one.
pub fn assign(
    cve_ids: &[CveId],
    annotators: &[AnnotatorId],
) -> Result<BTreeMap<CveId, Roles>, AnnotateError> {
    if annotators.len() != 3 {
        return Err(AnnotateError::AnnotatorCount(annotators.len()));
    }
    let mut seen = HashSet::new();
    for a in annotators {
        if !seen.insert(a) {
            return Err(AnnotateError::DuplicateAnnotator(a.clone()));
        }
    }
    if cve_ids.is_empty() {
        return Err(AnnotateError::NoRecords);
    }
    let mut sorted: Vec<&CveId> = cve_ids.iter().collect();
    sorted.sort();
    if let Some(pair) = sorted.windows(2).find(|p| p[0] == p[1]) {
        return Err(AnnotateError::DuplicateCve(pair[0].clone()));
    }
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let roles = Roles {
                annotator: annotators[i % 3].clone(),
                reviewer: annotators[(i + 1) % 3].clone(),
                adjudicator: annotators[(i + 2) % 3].clone(),
            };
            (id.clone(), roles)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Accept the prior label: the NVD one in round one, round one's after that.
    Agree,
    Relabel,
    Causal,
    Unmappable,
}

impl std::str::FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "agree" => Ok(Self::Agree),
            "relabel" => Ok(Self::Relabel),
            "causal" => Ok(Self::Causal),
            "unmappable" => Ok(Self::Unmappable),
            other => Err(format!("unknown action {other:?}")),
        }
    }
}

/// A decision as journaled: one per accepted submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub cve_id: CveId,
    pub annotator: AnnotatorId,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelAssignment>,
    /// Task version the annotator saw.
    pub task_version: u64,
    pub timestamp: DateTime<Utc>,
}

/// What a decision amounts to once `agree` is resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "labels", rename_all = "snake_case")]
pub enum Verdict {
    Labels(LabelAssignment),
    Unmappable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDecision {
    pub annotator: AnnotatorId,
    pub action: Action,
    pub verdict: Verdict,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    PendingR1,
    PendingR2,
    PendingAdjudication,
    Final,
    /// The adjudicator alone found the record unmappable.
    Conflict,
    Excluded,
}

impl TaskStatus {
    pub fn is_closed(self) -> bool {
        matches!(self, Self::Final | Self::Conflict | Self::Excluded)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::PendingR1 => "pending_r1",
            Self::PendingR2 => "pending_r2",
            Self::PendingAdjudication => "pending_adjudication",
            Self::Final => "final",
            Self::Conflict => "conflict",
            Self::Excluded => "excluded",
        }
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub cve_id: CveId,
    pub title: String,
    pub description: String,
    pub nvd_labels: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_ranking: Option<RankedList>,
    pub roles: Roles,
    pub round1: Option<RoundDecision>,
    pub round2: Option<RoundDecision>,
    pub adjudication: Option<RoundDecision>,
    pub status: TaskStatus,
    pub version: u64,
}

impl AnnotationTask {
    pub fn new(record: &CveRecord, roles: Roles, model_ranking: Option<RankedList>) -> Self {
        Self {
            cve_id: record.cve_id.clone(),
            title: record.title.clone(),
            description: record.description.clone(),
            nvd_labels: record.nvd_labels.clone(),
            model_ranking,
            roles,
            round1: None,
            round2: None,
            adjudication: None,
            status: TaskStatus::PendingR1,
            version: 0,
        }
    }

    /// The annotator the task is waiting on, if it is still open.
    pub fn expected_actor(&self) -> Option<&AnnotatorId> {
        match self.status {
            TaskStatus::PendingR1 => Some(&self.roles.annotator),
            TaskStatus::PendingR2 => Some(&self.roles.reviewer),
            TaskStatus::PendingAdjudication => Some(&self.roles.adjudicator),
            _ => None,
        }
    }

    /// Labels of a final task.
    pub fn final_labels(&self) -> Option<&LabelAssignment> {
        if self.status != TaskStatus::Final {
            return None;
        }
        let deciding = self.adjudication.as_ref().or(self.round2.as_ref())?;
        match &deciding.verdict {
            Verdict::Labels(l) => Some(l),
            Verdict::Unmappable => None,
        }
    }
}

/// The single Top 25 weakness among the NVD labels, if there is exactly one.
pub fn nvd_prior(nvd_labels: &BTreeSet<String>, catalog: &Catalog) -> Option<LabelAssignment> {
    let ranks: BTreeSet<CweRank> = nvd_labels
        .iter()
        .filter_map(|l| catalog.rank_of(l))
        .collect();
    match ranks.len() {
        1 => ranks.into_iter().next().map(LabelAssignment::single),
        _ => None,
    }
}

fn verdict(
    task: &AnnotationTask,
    decision: &Decision,
    catalog: &Catalog,
) -> Result<Verdict, String> {
    let labels = decision.labels.as_ref();
    match decision.action {
        Action::Agree => {
            if labels.is_some() {
                return Err("agree carries no labels".into());
            }
            match task.status {
                TaskStatus::PendingR1 => nvd_prior(&task.nvd_labels, catalog)
                    .map(Verdict::Labels)
                    .ok_or_else(|| "no single Top 25 NVD label to agree with".to_string()),
                TaskStatus::PendingR2 => Ok(task
                    .round1
                    .as_ref()
                    .expect("round one decided")
                    .verdict
                    .clone()),
                _ => Err("adjudication needs labels or unmappable".into()),
            }
        }
        Action::Relabel => match labels {
            Some(l) if l.is_single() => Ok(Verdict::Labels(l.clone())),
            Some(_) => Err("relabel takes exactly one label; use causal for chains".into()),
            None => Err("relabel needs a label".into()),
        },
        Action::Causal => match labels {
            Some(l) if l.is_causal() => Ok(Verdict::Labels(l.clone())),
            Some(_) => Err("causal needs a chain of at least two labels".into()),
            None => Err("causal needs a label chain".into()),
        },
        Action::Unmappable => match labels {
            Some(_) => Err("unmappable carries no labels".into()),
            None => Ok(Verdict::Unmappable),
        },
    }
}

/// Applies one decision and returns the advanced task at the next version.
pub fn submit(
    task: &AnnotationTask,
    decision: &Decision,
    catalog: &Catalog,
) -> Result<AnnotationTask, AnnotateError> {
    let cve_id = task.cve_id.clone();
    let Some(expected) = task.expected_actor() else {
        return Err(AnnotateError::Closed {
            cve_id,
            status: task.status,
        });
    };
    if decision.task_version != task.version {
        return Err(AnnotateError::StaleVersion {
            cve_id,
            current: task.version,
            submitted: decision.task_version,
        });
    }
    if &decision.annotator != expected {
        return Err(AnnotateError::WrongActor {
            cve_id,
            expected: expected.clone(),
            got: decision.annotator.clone(),
        });
    }
    let verdict =
        verdict(task, decision, catalog).map_err(|message| AnnotateError::InvalidDecision {
            cve_id: cve_id.clone(),
            message,
        })?;
    let round = RoundDecision {
        annotator: decision.annotator.clone(),
        action: decision.action,
        verdict,
        timestamp: decision.timestamp,
    };
    let mut next = task.clone();
    next.version += 1;
    match task.status {
        TaskStatus::PendingR1 => {
            next.round1 = Some(round);
            next.status = TaskStatus::PendingR2;
        }
        TaskStatus::PendingR2 => {
            let first = &task.round1.as_ref().expect("round one decided").verdict;
            next.status = match (&round.verdict, round.verdict == *first) {
                (Verdict::Labels(_), true) => TaskStatus::Final,
                (Verdict::Unmappable, true) => TaskStatus::Excluded,
                (_, false) => TaskStatus::PendingAdjudication,
            };
            next.round2 = Some(round);
        }
        TaskStatus::PendingAdjudication => {
            let earlier_unmappable = [&task.round1, &task.round2]
                .iter()
                .any(|r| r.as_ref().map(|r| &r.verdict) == Some(&Verdict::Unmappable));
            next.status = match (&round.verdict, earlier_unmappable) {
                (Verdict::Labels(_), _) => TaskStatus::Final,
                (Verdict::Unmappable, true) => TaskStatus::Excluded,
                (Verdict::Unmappable, false) => TaskStatus::Conflict,
            };
            next.adjudication = Some(round);
        }
        _ => unreachable!("closed tasks have no expected actor"),
    }
    Ok(next)
}

/// Final rows of the closed tasks, ordered by id.
pub fn export_final<'a>(tasks: impl IntoIterator<Item = &'a AnnotationTask>) -> Vec<DatasetRow> {
    let mut rows: Vec<DatasetRow> = tasks
        .into_iter()
        .filter_map(|t| {
            t.final_labels()
                .map(|l| DatasetRow::new(t.cve_id.clone(), l.clone()))
        })
        .collect();
    rows.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));
    rows
}

/// Share of rows whose weakness (every chain element, for causal rows)
/// appears among the record's NVD labels. Rows without NVD labels on file
/// are skipped; 0 when nothing is left.
pub fn agreement_with_nvd(
    rows: &[DatasetRow],
    nvd_labels: &HashMap<CveId, BTreeSet<String>>,
    catalog: &Catalog,
) -> f64 {
    let mut considered = 0usize;
    let mut agreeing = 0usize;
    for row in rows {
        let Some(nvd) = nvd_labels.get(&row.cve_id) else {
            continue;
        };
        considered += 1;
        if row
            .assignment
            .chain()
            .iter()
            .all(|&r| nvd.contains(catalog.cwe_id(r)))
        {
            agreeing += 1;
        }
    }
    if considered == 0 {
        0.0
    } else {
        agreeing as f64 / considered as f64
    }
}
