mod common;

use std::path::Path;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};

use common::{serve, Script};
use cwemap::corpus::{Catalog, CveId, CveRecord, CweRank, RecordState};
use cwemap::preprocess::Preprocessor;
use cwemap::rank::{
    external_rank, score_request, HttpScorer, RankError, RecordedScorer, ScoreRequest,
    ScoreResponse, ScoredDocument, Scorer,
};
use cwemap::retry::RetryPolicy;

const FIXTURE: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/tests/fixtures/score_batch_recorded.jsonl"
);

fn fast_retry(max_attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        base_delay: Duration::from_millis(5),
        max_delay: Duration::from_millis(20),
    }
}

fn scorer(base: &str, retry: RetryPolicy) -> HttpScorer {
    HttpScorer::new(base, Duration::from_secs(5), retry).unwrap()
}

fn record() -> CveRecord {
    CveRecord {
        cve_id: CveId::parse("CVE-2021-0101").unwrap(),
        title: "SQL injection in Acme Portal search".into(),
        description: "SQL injection in the search endpoint of Acme Portal before 2.3.1 allows remote attackers to execute arbitrary SQL commands via the q parameter. See https://acme.example/advisory/17 for details.".into(),
        state: RecordState::Accepted,
        nvd_labels: Default::default(),
    }
}

/// Scores each document 26 minus its catalog rank, answered in reverse order.
async fn by_rank(Json(req): Json<ScoreRequest>) -> Json<ScoreResponse> {
    let mut scores: Vec<ScoredDocument> = req
        .documents
        .iter()
        .enumerate()
        .map(|(i, d)| ScoredDocument {
            id: d.id.clone(),
            score: 25.0 - i as f64,
        })
        .collect();
    scores.reverse();
    Json(ScoreResponse { scores })
}

async fn flat(Json(req): Json<ScoreRequest>) -> Json<ScoreResponse> {
    Json(ScoreResponse {
        scores: req
            .documents
            .iter()
            .map(|d| ScoredDocument {
                id: d.id.clone(),
                score: 0.5,
            })
            .collect(),
    })
}

async fn short(Json(req): Json<ScoreRequest>) -> Json<ScoreResponse> {
    Json(ScoreResponse {
        scores: req
            .documents
            .iter()
            .skip(1)
            .map(|d| ScoredDocument {
                id: d.id.clone(),
                score: 1.0,
            })
            .collect(),
    })
}

async fn replay(
    State(recorded): State<std::sync::Arc<RecordedScorer>>,
    Json(req): Json<ScoreRequest>,
) -> Result<Json<ScoreResponse>, StatusCode> {
    recorded
        .score_batch(&req)
        .map(Json)
        .map_err(|_| StatusCode::NOT_FOUND)
}

async fn scripted(State(script): State<Script>, _body: String) -> (StatusCode, String) {
    script.next()
}

fn ok_body() -> String {
    let req = score_request(&record(), &Catalog::top25_2022(), &Preprocessor::default());
    let scores = req
        .documents
        .iter()
        .enumerate()
        .map(|(i, d)| ScoredDocument {
            id: d.id.clone(),
            score: 25.0 - i as f64,
        })
        .collect();
    serde_json::to_string(&ScoreResponse { scores }).unwrap()
}

fn scripted_server(replies: Vec<(StatusCode, String)>) -> (String, Script) {
    let script = Script::new(replies);
    let app = Router::new()
        .route("/score_batch", post(scripted))
        .with_state(script.clone());
    (serve(app), script)
}

#[test]
fn request_carries_cleaned_query_and_all_weakness_texts() {
    let catalog = Catalog::top25_2022();
    let req = score_request(&record(), &catalog, &Preprocessor::default());
    assert_eq!(req.documents.len(), 25);
    assert_eq!(req.documents[0].id, "CWE-787");
    assert_eq!(req.documents[24].id, "CWE-94");
    assert_eq!(
        req.documents[24].text,
        catalog.collated_text(CweRank::new(25).unwrap())
    );
    assert!(!req.query.contains("https://"));
    assert!(!req.query.contains("2.3.1"));
    let wire: serde_json::Value = serde_json::to_value(&req).unwrap();
    assert!(wire["query"].is_string());
    assert!(wire["documents"][0]["id"].is_string() && wire["documents"][0]["text"].is_string());
}

#[test]
fn scores_map_back_by_id_not_position() {
    let base = serve(Router::new().route("/score_batch", post(by_rank)));
    let catalog = Catalog::top25_2022();
    let list = external_rank(
        &record(),
        &catalog,
        &scorer(&base, RetryPolicy::none()),
        &Preprocessor::default(),
    )
    .unwrap();
    assert!(!list.is_fallback());
    let ranks: Vec<u8> = list.ranks().iter().map(|r| r.get()).collect();
    assert_eq!(ranks, (1..=25).collect::<Vec<u8>>());
    assert_eq!(list.top().score, 25.0);
}

#[test]
fn constant_scores_fall_back_to_catalog_order() {
    let base = serve(Router::new().route("/score_batch", post(flat)));
    let list = external_rank(
        &record(),
        &Catalog::top25_2022(),
        &scorer(&base, RetryPolicy::none()),
        &Preprocessor::default(),
    )
    .unwrap();
    assert!(list.is_fallback());
    assert_eq!(list.top().rank.get(), 1);
}

#[test]
fn recorded_exchange_replays_identically_offline_and_over_http() {
    let recorded = RecordedScorer::load(Path::new(FIXTURE)).unwrap();
    assert_eq!(recorded.exchanges().len(), 1);
    let catalog = Catalog::top25_2022();
    let pre = Preprocessor::default();
    let offline = external_rank(&record(), &catalog, &recorded, &pre).unwrap();

    let app = Router::new()
        .route("/score_batch", post(replay))
        .with_state(std::sync::Arc::new(recorded));
    let base = serve(app);
    let live = external_rank(
        &record(),
        &catalog,
        &scorer(&base, RetryPolicy::none()),
        &pre,
    )
    .unwrap();

    assert_eq!(offline, live);
    let top3: Vec<u8> = offline.ranks()[..3].iter().map(|r| r.get()).collect();
    assert_eq!(top3, vec![3, 4, 6]);
    assert_eq!(offline.top().score, 7.25);
    assert!(!offline.is_fallback());
}

#[test]
fn transient_server_errors_are_retried() {
    let (base, script) = scripted_server(vec![
        (StatusCode::INTERNAL_SERVER_ERROR, String::new()),
        (StatusCode::TOO_MANY_REQUESTS, String::new()),
        (StatusCode::OK, ok_body()),
    ]);
    let list = external_rank(
        &record(),
        &Catalog::top25_2022(),
        &scorer(&base, fast_retry(4)),
        &Preprocessor::default(),
    )
    .unwrap();
    assert_eq!(script.hits(), 3);
    assert_eq!(list.top().rank.get(), 1);
}

#[test]
fn persistent_outage_surfaces_status_after_budget() {
    let (base, script) = scripted_server(vec![(StatusCode::SERVICE_UNAVAILABLE, String::new())]);
    let err = external_rank(
        &record(),
        &Catalog::top25_2022(),
        &scorer(&base, fast_retry(3)),
        &Preprocessor::default(),
    )
    .unwrap_err();
    assert!(matches!(err, RankError::Status(503)), "{err}");
    assert_eq!(script.hits(), 3);
}

#[test]
fn client_errors_and_malformed_bodies_are_not_retried() {
    let (base, script) = scripted_server(vec![(StatusCode::OK, "{\"scores\": 7}".into())]);
    let err = external_rank(
        &record(),
        &Catalog::top25_2022(),
        &scorer(&base, fast_retry(3)),
        &Preprocessor::default(),
    )
    .unwrap_err();
    assert!(matches!(err, RankError::Json(_)), "{err}");
    assert_eq!(script.hits(), 1);

    let (base, script) = scripted_server(vec![(StatusCode::BAD_REQUEST, String::new())]);
    let err = external_rank(
        &record(),
        &Catalog::top25_2022(),
        &scorer(&base, fast_retry(3)),
        &Preprocessor::default(),
    )
    .unwrap_err();
    assert!(matches!(err, RankError::Status(400)), "{err}");
    assert_eq!(script.hits(), 1);
}

#[test]
fn incomplete_response_is_rejected() {
    let base = serve(Router::new().route("/score_batch", post(short)));
    let err = external_rank(
        &record(),
        &Catalog::top25_2022(),
        &scorer(&base, RetryPolicy::none()),
        &Preprocessor::default(),
    )
    .unwrap_err();
    assert!(
        matches!(
            err,
            RankError::ScoreCount {
                expected: 25,
                got: 24
            }
        ),
        "{err}"
    );
}

#[test]
fn unreachable_scorer_is_a_transport_error() {
    let err = external_rank(
        &record(),
        &Catalog::top25_2022(),
        &scorer("http://127.0.0.1:9", RetryPolicy::none()),
        &Preprocessor::default(),
    )
    .unwrap_err();
    assert!(matches!(err, RankError::Transport(_)), "{err}");
}
