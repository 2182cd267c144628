use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use super::{
    assign, export_final, read_journal, submit, AnnotateError, AnnotationTask, AnnotatorId,
    Decision, FeedbackEvent, FeedbackLog, Journal, TaskStatus, Verdict,
};
use crate::corpus::{Catalog, CveId, CveRecord, DatasetRow};
use crate::rank::RankedList;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub pending_r1: usize,
    pub pending_r2: usize,
    pub pending_adjudication: usize,
    #[serde(rename = "final")]
    pub finalized: usize,
    pub conflict: usize,
    pub excluded: usize,
}

#[derive(Debug)]
struct Inner {
    tasks: BTreeMap<CveId, AnnotationTask>,
    journal: Option<Journal>,
    feedback: Option<FeedbackLog>,
}

/// Computes the model ranking shown beside a task.
pub type AssistFn<'a> = dyn Fn(&CveRecord) -> Option<RankedList> + 'a;

/// Task store shared by all annotators. Mutations are serialized behind one
/// lock and checked against the task version the annotator last saw.
#[derive(Debug)]
pub struct Workflow {
    catalog: Catalog,
    annotators: Vec<AnnotatorId>,
    inner: Mutex<Inner>,
}

impl Workflow {
    /// Assigns the records and, when `assist` is given, attaches its ranking
    /// to every task up front.
    pub fn new(
        catalog: Catalog,
        records: &[CveRecord],
        annotators: Vec<AnnotatorId>,
        assist: Option<&AssistFn<'_>>,
    ) -> Result<Self, AnnotateError> {
        let ids: Vec<CveId> = records.iter().map(|r| r.cve_id.clone()).collect();
        let mut roles = assign(&ids, &annotators)?;
        let tasks = records
            .iter()
            .map(|r| {
                let ranking = assist.and_then(|f| f(r));
                let roles = roles.remove(&r.cve_id).expect("every record assigned");
                (r.cve_id.clone(), AnnotationTask::new(r, roles, ranking))
            })
            .collect();
        Ok(Self {
            catalog,
            annotators,
            inner: Mutex::new(Inner {
                tasks,
                journal: None,
                feedback: None,
            }),
        })
    }

    /// Replays the decisions already in `path`, then journals new ones there.
    pub fn with_journal(self, path: &Path) -> Result<Self, AnnotateError> {
        let decisions = read_journal(path)?;
        {
            let mut inner = self.lock();
            for (i, d) in decisions.iter().enumerate() {
                let replay_error = |message: String| AnnotateError::Malformed {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                };
                let task = inner
                    .tasks
                    .get(&d.cve_id)
                    .ok_or_else(|| replay_error(format!("no task for {}", d.cve_id)))?;
                let next =
                    submit(task, d, &self.catalog).map_err(|e| replay_error(e.to_string()))?;
                inner.tasks.insert(d.cve_id.clone(), next);
            }
            inner.journal = Some(Journal::open(path)?);
        }
        if !decisions.is_empty() {
            log::info!(
                "replayed {} decisions from {}",
                decisions.len(),
                path.display()
            );
        }
        Ok(self)
    }

    pub fn with_feedback_log(self, path: &Path) -> Result<Self, AnnotateError> {
        self.lock().feedback = Some(FeedbackLog::open(path)?);
        Ok(self)
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn annotators(&self) -> &[AnnotatorId] {
        &self.annotators
    }

    /// Lowest-id task waiting on `annotator`, prior rounds included.
    pub fn next_task(
        &self,
        annotator: &AnnotatorId,
    ) -> Result<Option<AnnotationTask>, AnnotateError> {
        if !self.annotators.contains(annotator) {
            return Err(AnnotateError::UnknownAnnotator(annotator.clone()));
        }
        Ok(self
            .lock()
            .tasks
            .values()
            .find(|t| t.expected_actor() == Some(annotator))
            .cloned())
    }

    pub fn task(&self, cve_id: &CveId) -> Option<AnnotationTask> {
        self.lock().tasks.get(cve_id).cloned()
    }

    /// Validates, journals, logs feedback, then applies the decision.
    pub fn submit(&self, decision: Decision) -> Result<AnnotationTask, AnnotateError> {
        let mut inner = self.lock();
        let task = inner
            .tasks
            .get(&decision.cve_id)
            .ok_or_else(|| AnnotateError::UnknownTask(decision.cve_id.to_string()))?;
        let next = submit(task, &decision, &self.catalog)?;
        if let Some(journal) = inner.journal.as_mut() {
            journal.append(&decision)?;
        }
        if let (Some(log), Some(ranking)) = (inner.feedback.as_mut(), next.model_ranking.as_ref()) {
            let verdict = [&next.adjudication, &next.round2, &next.round1]
                .into_iter()
                .flatten()
                .next()
                .map(|r| &r.verdict);
            let labels = match verdict {
                Some(Verdict::Labels(l)) => Some(l.clone()),
                _ => None,
            };
            log.append(FeedbackEvent::new(
                decision.cve_id.clone(),
                ranking.ranks(),
                labels,
                decision.timestamp,
            ))?;
        }
        inner.tasks.insert(decision.cve_id.clone(), next.clone());
        Ok(next)
    }

    pub fn tasks(&self) -> Vec<AnnotationTask> {
        self.lock().tasks.values().cloned().collect()
    }

    pub fn export_final(&self) -> Vec<DatasetRow> {
        export_final(self.lock().tasks.values())
    }

    pub fn status_counts(&self) -> StatusCounts {
        let mut counts = StatusCounts::default();
        for t in self.lock().tasks.values() {
            *match t.status {
                TaskStatus::PendingR1 => &mut counts.pending_r1,
                TaskStatus::PendingR2 => &mut counts.pending_r2,
                TaskStatus::PendingAdjudication => &mut counts.pending_adjudication,
                TaskStatus::Final => &mut counts.finalized,
                TaskStatus::Conflict => &mut counts.conflict,
                TaskStatus::Excluded => &mut counts.excluded,
            } += 1;
        }
        counts
    }

    pub fn feedback_len(&self) -> usize {
        self.lock().feedback.as_ref().map_or(0, FeedbackLog::len)
    }
}
