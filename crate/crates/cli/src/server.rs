//! JSON API over the annotation workflow, plus an optional static UI.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use cwemap::annotate::{
    agreement_with_nvd, Action, AnnotateError, AnnotatorId, Decision, StatusCounts, Workflow,
};
use cwemap::corpus::{
    dataset_stats, write_dataset, write_dataset_jsonl, CveId, DatasetStats, LabelAssignment,
    LabelCount,
};

/// Header naming the acting annotator; must match the body when present.
pub const ANNOTATOR_HEADER: &str = "x-annotator";

pub struct AppState {
    pub workflow: Workflow,
}

#[derive(Debug, Serialize)]
struct ApiError {
    error: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (
        status,
        Json(ApiError {
            error: message.into(),
        }),
    )
        .into_response()
}

fn annotate_error(e: AnnotateError) -> Response {
    let status = match &e {
        AnnotateError::StaleVersion { .. } | AnnotateError::Closed { .. } => StatusCode::CONFLICT,
        AnnotateError::WrongActor { .. } => StatusCode::FORBIDDEN,
        AnnotateError::UnknownTask(_) | AnnotateError::UnknownAnnotator(_) => StatusCode::NOT_FOUND,
        AnnotateError::InvalidDecision { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error(status, e.to_string())
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/tasks/:cve_id/decision", post(decide))
        .route("/api/dataset/stats", get(stats))
        .route("/api/dataset/export", get(export))
        .route("/api/catalog", get(catalog))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    annotator: String,
}

async fn next_task(State(state): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> Response {
    match state.workflow.next_task(&AnnotatorId::new(q.annotator)) {
        Ok(Some(task)) => Json(task).into_response(),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => annotate_error(e),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionBody {
    pub annotator: String,
    pub action: Action,
    #[serde(default)]
    pub labels: Option<LabelAssignment>,
    pub task_version: u64,
}

async fn decide(
    State(state): State<Arc<AppState>>,
    Path(cve_id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let cve_id = match CveId::parse(&cve_id) {
        Ok(id) => id,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    if let Some(h) = headers.get(ANNOTATOR_HEADER) {
        if h.to_str().ok() != Some(body.annotator.as_str()) {
            return error(
                StatusCode::FORBIDDEN,
                "annotator header does not match the decision",
            );
        }
    }
    let decision = Decision {
        cve_id,
        annotator: AnnotatorId::new(body.annotator),
        action: body.action,
        labels: body.labels,
        task_version: body.task_version,
        timestamp: chrono::Utc::now(),
    };
    let result = tokio::task::spawn_blocking(move || state.workflow.submit(decision)).await;
    match result {
        Ok(Ok(task)) => Json(task).into_response(),
        Ok(Err(e)) => annotate_error(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatsResponse {
    pub tasks: StatusCounts,
    /// Open tasks waiting on each annotator.
    pub pending_by_annotator: BTreeMap<String, usize>,
    pub final_rows: DatasetStats,
    pub labels: Vec<LabelCount>,
    pub agreement_with_nvd: f64,
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<StatsResponse> {
    let wf = &state.workflow;
    let tasks = wf.tasks();
    let mut pending: BTreeMap<String, usize> =
        wf.annotators().iter().map(|a| (a.to_string(), 0)).collect();
    for t in &tasks {
        if let Some(a) = t.expected_actor() {
            *pending.entry(a.to_string()).or_default() += 1;
        }
    }
    let rows = wf.export_final();
    let nvd: HashMap<CveId, BTreeSet<String>> = tasks
        .iter()
        .filter(|t| !t.nvd_labels.is_empty())
        .map(|t| (t.cve_id.clone(), t.nvd_labels.clone()))
        .collect();
    let final_rows = dataset_stats(&rows);
    Json(StatsResponse {
        tasks: wf.status_counts(),
        pending_by_annotator: pending,
        labels: final_rows.label_counts(wf.catalog()),
        final_rows,
        agreement_with_nvd: agreement_with_nvd(&rows, &nvd, wf.catalog()),
    })
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn export(State(state): State<Arc<AppState>>, Query(q): Query<ExportQuery>) -> Response {
    let rows = state.workflow.export_final();
    let mut buf = Vec::new();
    let (written, content_type) = match q.format.as_deref().unwrap_or("csv") {
        "csv" => (write_dataset(&rows, &mut buf), "text/csv"),
        "jsonl" => (write_dataset_jsonl(&rows, &mut buf), "application/x-ndjson"),
        other => {
            return error(
                StatusCode::BAD_REQUEST,
                format!("unknown format {other:?}; use csv or jsonl"),
            )
        }
    };
    match written {
        Ok(()) => ([(header::CONTENT_TYPE, content_type)], buf).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn catalog(State(state): State<Arc<AppState>>) -> Response {
    Json(state.workflow.catalog().entries()).into_response()
}
