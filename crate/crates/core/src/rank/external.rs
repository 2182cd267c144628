use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{RankError, RankedList};
use crate::corpus::{Catalog, CveRecord, CweRank, TOP_N};
use crate::preprocess::Preprocessor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerDocument {
    pub id: String,
    pub text: String,
}

/// Body of `POST /score_batch`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub query: String,
    pub documents: Vec<ScorerDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDocument {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<ScoredDocument>,
}

/// Anything that scores one query against a batch of documents.
pub trait Scorer: Send + Sync {
    fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, RankError>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, RankError> {
        (**self).score_batch(request)
    }
}

/// The cleaned CVE text against all 25 collated weakness texts, ids are CWE ids.
pub fn score_request(
    cve: &CveRecord,
    catalog: &Catalog,
    preprocessor: &Preprocessor,
) -> ScoreRequest {
    ScoreRequest {
        query: preprocessor.clean_text(&cve.query_text()),
        documents: CweRank::all()
            .map(|r| ScorerDocument {
                id: catalog.cwe_id(r).to_string(),
                text: catalog.collated_text(r),
            })
            .collect(),
    }
}

/// Maps a response back onto ranks. Every requested id must be scored exactly once.
pub fn assemble_ranking(
    cve_id: &str,
    request: &ScoreRequest,
    response: &ScoreResponse,
) -> Result<RankedList, RankError> {
    if response.scores.len() != TOP_N || request.documents.len() != TOP_N {
        return Err(RankError::ScoreCount {
            expected: TOP_N,
            got: response.scores.len(),
        });
    }
    let index: HashMap<&str, usize> = request
        .documents
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.as_str(), i))
        .collect();
    let mut scores = [None; TOP_N];
    for scored in &response.scores {
        let &i = index
            .get(scored.id.as_str())
            .ok_or_else(|| RankError::UnknownDocument(scored.id.clone()))?;
        if !scored.score.is_finite() {
            return Err(RankError::NonFinite(scored.id.clone()));
        }
        if scores[i].replace(scored.score).is_some() {
            return Err(RankError::DuplicateDocument(scored.id.clone()));
        }
    }
    let scores: Vec<f64> = scores.iter().map(|s| s.expect("all 25 ids seen")).collect();
    RankedList::from_scores(cve_id, &scores)
}

pub fn external_rank(
    cve: &CveRecord,
    catalog: &Catalog,
    scorer: &dyn Scorer,
    preprocessor: &Preprocessor,
) -> Result<RankedList, RankError> {
    let request = score_request(cve, catalog, preprocessor);
    let response = scorer.score_batch(&request)?;
    assemble_ranking(cve.cve_id.as_str(), &request, &response)
}

/// Ranks many records with at most `fan_out` requests in flight.
///
/// Once `cancel` is set, records not yet started fail with
/// [`RankError::Cancelled`]; requests already in flight finish.
pub fn external_rank_many(
    cves: &[CveRecord],
    catalog: &Catalog,
    scorer: &dyn Scorer,
    preprocessor: &Preprocessor,
    fan_out: usize,
    cancel: &AtomicBool,
) -> Vec<Result<RankedList, RankError>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RankedList, RankError>>>> =
        Mutex::new((0..cves.len()).map(|_| None).collect());
    let workers = fan_out.max(1).min(cves.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cve) = cves.get(i) else { break };
                let result = if cancel.load(Ordering::SeqCst) {
                    Err(RankError::Cancelled)
                } else {
                    external_rank(cve, catalog, scorer, preprocessor)
                };
                results.lock().expect("result slots")[i] = Some(result);
            });
        }
    });
    results
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every record visited"))
        .collect()
}

/// A request and the response it received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedExchange {
    pub request: ScoreRequest,
    pub response: ScoreResponse,
}

/// Replays recorded responses; an unrecorded request is a transport error.
#[derive(Debug, Clone, Default)]
pub struct RecordedScorer {
    exchanges: Vec<RecordedExchange>,
    by_request: HashMap<String, usize>,
}

impl RecordedScorer {
    pub fn new(exchanges: Vec<RecordedExchange>) -> Self {
        let mut scorer = Self::default();
        for e in exchanges {
            scorer.push(e);
        }
        scorer
    }

    pub fn push(&mut self, exchange: RecordedExchange) {
        let key = request_key(&exchange.request);
        self.by_request.insert(key, self.exchanges.len());
        self.exchanges.push(exchange);
    }

    pub fn exchanges(&self) -> &[RecordedExchange] {
        &self.exchanges
    }

    /// Calls `live` and records what it returns.
    pub fn record(
        &mut self,
        live: &dyn Scorer,
        request: &ScoreRequest,
    ) -> Result<ScoreResponse, RankError> {
        let response = live.score_batch(request)?;
        self.push(RecordedExchange {
            request: request.clone(),
            response: response.clone(),
        });
        Ok(response)
    }

    pub fn read_jsonl(reader: impl Read) -> Result<Self, RankError> {
        let mut exchanges = Vec::new();
        for (n, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            exchanges.push(
                serde_json::from_str(&line).map_err(|e| RankError::Malformed {
                    line: n + 1,
                    message: e.to_string(),
                })?,
            );
        }
        Ok(Self::new(exchanges))
    }

    pub fn write_jsonl(&self, writer: impl Write) -> Result<(), RankError> {
        let mut out = BufWriter::new(writer);
        for e in &self.exchanges {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RankError> {
        Self::read_jsonl(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), RankError> {
        self.write_jsonl(std::fs::File::create(path)?)
    }
}

fn request_key(request: &ScoreRequest) -> String {
    serde_json::to_string(request).expect("request serializes")
}

impl Scorer for RecordedScorer {
    fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, RankError> {
        self.by_request
            .get(&request_key(request))
            .map(|&i| self.exchanges[i].response.clone())
            .ok_or_else(|| {
                RankError::Transport(format!(
                    "no recorded response for query {:?}",
                    request.query
                ))
            })
    }
}

#[cfg(feature = "http")]
pub use http::HttpScorer;

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use super::{RankError, ScoreRequest, ScoreResponse, Scorer};
    use crate::retry::RetryPolicy;

    /// Blocking client for a remote `/score_batch` endpoint.
    #[derive(Debug, Clone)]
    pub struct HttpScorer {
        url: String,
        client: reqwest::blocking::Client,
        retry: RetryPolicy,
    }

    impl HttpScorer {
        /// `base_url` is the server root, e.g. `http://127.0.0.1:8088`.
        pub fn new(
            base_url: &str,
            timeout: Duration,
            retry: RetryPolicy,
        ) -> Result<Self, RankError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .map_err(|e| RankError::Transport(e.to_string()))?;
            Ok(Self {
                url: format!("{}/score_batch", base_url.trim_end_matches('/')),
                client,
                retry,
            })
        }

        pub fn url(&self) -> &str {
            &self.url
        }

        fn attempt(&self, request: &ScoreRequest) -> Result<ScoreResponse, RankError> {
            let response = self
                .client
                .post(&self.url)
                .json(request)
                .send()
                .map_err(|e| RankError::Transport(e.to_string()))?;
            let status = response.status();
            if !status.is_success() {
                return Err(RankError::Status(status.as_u16()));
            }
            let body = response
                .bytes()
                .map_err(|e| RankError::Transport(e.to_string()))?;
            Ok(serde_json::from_slice(&body)?)
        }
    }

    impl Scorer for HttpScorer {
        fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, RankError> {
            self.retry.run(
                |attempt| {
                    let result = self.attempt(request);
                    if let Err(e) = &result {
                        log::warn!("scorer attempt {attempt} failed: {e}");
                    }
                    result
                },
                RankError::is_retryable,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CveId, RecordState};

    struct Monotone;

    impl Scorer for Monotone {
        fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, RankError> {
            Ok(ScoreResponse {
                scores: request
                    .documents
                    .iter()
                    .enumerate()
                    .map(|(i, d)| ScoredDocument {
                        id: d.id.clone(),
                        score: (TOP_N - i) as f64,
                    })
                    .collect(),
            })
        }
    }

    fn record(n: u64) -> CveRecord {
        CveRecord {
            cve_id: CveId::parse(&format!("CVE-2021-{n:04}")).unwrap(),
            title: String::new(),
            description: format!("Heap buffer overflow number {n}."),
            state: RecordState::Accepted,
            nvd_labels: Default::default(),
        }
    }

    #[test]
    fn request_carries_all_weaknesses() {
        let catalog = Catalog::top25_2022();
        let req = score_request(&record(1), &catalog, &Preprocessor::default());
        assert_eq!(req.documents.len(), 25);
        assert_eq!(req.documents[0].id, "CWE-787");
        assert_eq!(req.query, "Heap buffer overflow number 1.");
    }

    #[test]
    fn monotone_scores_give_rank_order() {
        let catalog = Catalog::top25_2022();
        let list =
            external_rank(&record(1), &catalog, &Monotone, &Preprocessor::default()).unwrap();
        let order: Vec<u8> = list.ranks().iter().map(|r| r.get()).collect();
        assert_eq!(order, (1..=25).collect::<Vec<u8>>());
        assert!(!list.is_fallback());
    }

    #[test]
    fn assemble_rejects_bad_responses() {
        let catalog = Catalog::top25_2022();
        let req = score_request(&record(1), &catalog, &Preprocessor::default());
        let good = Monotone.score_batch(&req).unwrap();

        let mut short = good.clone();
        short.scores.pop();
        assert!(matches!(
            assemble_ranking("x", &req, &short),
            Err(RankError::ScoreCount { got: 24, .. })
        ));

        let mut unknown = good.clone();
        unknown.scores[3].id = "CWE-1".into();
        assert!(matches!(
            assemble_ranking("x", &req, &unknown),
            Err(RankError::UnknownDocument(_))
        ));

        let mut dup = good.clone();
        dup.scores[3].id = dup.scores[4].id.clone();
        assert!(matches!(
            assemble_ranking("x", &req, &dup),
            Err(RankError::DuplicateDocument(_))
        ));

        let mut nan = good;
        nan.scores[0].score = f64::INFINITY;
        assert!(matches!(
            assemble_ranking("x", &req, &nan),
            Err(RankError::NonFinite(_))
        ));
    }

    #[test]
    fn response_order_does_not_matter() {
        let catalog = Catalog::top25_2022();
        let req = score_request(&record(1), &catalog, &Preprocessor::default());
        let mut resp = Monotone.score_batch(&req).unwrap();
        let forward = assemble_ranking("x", &req, &resp).unwrap();
        resp.scores.reverse();
        assert_eq!(assemble_ranking("x", &req, &resp).unwrap(), forward);
    }

    #[test]
    fn many_preserves_input_order() {
        let catalog = Catalog::top25_2022();
        let cves: Vec<CveRecord> = (1..=9).map(record).collect();
        let cancel = AtomicBool::new(false);
        let results = external_rank_many(
            &cves,
            &catalog,
            &Monotone,
            &Preprocessor::default(),
            4,
            &cancel,
        );
        assert_eq!(results.len(), 9);
        for (cve, r) in cves.iter().zip(&results) {
            assert_eq!(r.as_ref().unwrap().cve_id, cve.cve_id.as_str());
        }
    }

    #[test]
    fn cancelled_batch_fails_every_record() {
        let catalog = Catalog::top25_2022();
        let cves: Vec<CveRecord> = (1..=5).map(record).collect();
        let cancel = AtomicBool::new(true);
        let results = external_rank_many(
            &cves,
            &catalog,
            &Monotone,
            &Preprocessor::default(),
            2,
            &cancel,
        );
        assert!(results
            .iter()
            .all(|r| matches!(r, Err(RankError::Cancelled))));
    }

    #[test]
    fn recorded_scorer_replays_and_round_trips() {
        let catalog = Catalog::top25_2022();
        let pre = Preprocessor::default();
        let mut recorder = RecordedScorer::default();
        let req = score_request(&record(2), &catalog, &pre);
        recorder.record(&Monotone, &req).unwrap();
        let mut buf = Vec::new();
        recorder.write_jsonl(&mut buf).unwrap();
        let replay = RecordedScorer::read_jsonl(buf.as_slice()).unwrap();
        let a = external_rank(&record(2), &catalog, &replay, &pre).unwrap();
        let b = external_rank(&record(2), &catalog, &replay, &pre).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert!(matches!(
            external_rank(&record(3), &catalog, &replay, &pre),
            Err(RankError::Transport(_))
        ));
    }
}
