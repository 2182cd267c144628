//! Rankers that order all 25 weaknesses for one CVE.
//!
//! Three sources of scores share one output type: BM25 over whole documents,
//! max (or mean) cosine between sentence embeddings, and an external scorer
//! reached over a small JSON protocol.

mod bm25;
mod embedding;
mod external;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CweRank, TOP_N};

pub use bm25::{bm25_rank, Bm25Index, Bm25Params, Bm25Ranker};
pub use embedding::{
    cosine, cosine_sentence_rank, cve_key, cwe_key, sentence_scores, Aggregation, CosineRanker,
    EmbeddingStore, StoredVector,
};
#[cfg(feature = "http")]
pub use external::HttpScorer;
pub use external::{
    assemble_ranking, external_rank, external_rank_many, score_request, RecordedExchange,
    RecordedScorer, ScoreRequest, ScoreResponse, ScoredDocument, Scorer, ScorerDocument,
};

#[derive(Debug, Error)]
pub enum RankError {
    #[error("expected {expected} scores, got {got}")]
    ScoreCount { expected: usize, got: usize },
    #[error("score for {0} is not finite")]
    NonFinite(String),
    #[error("unknown document id {0:?} in scorer response")]
    UnknownDocument(String),
    #[error("document {0:?} scored twice")]
    DuplicateDocument(String),
    #[error("no vector for ({key}, {index})")]
    MissingVector { key: String, index: usize },
    #[error("vector dimension {got} does not match store dimension {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("vector ({key}, {index}) has a non-finite component")]
    InvalidVector { key: String, index: usize },
    #[error("invalid BM25 parameters: {0}")]
    Params(String),
    #[error("scorer unreachable: {0}")]
    Transport(String),
    #[error("scorer returned HTTP {0}")]
    Status(u16),
    #[error("request cancelled")]
    Cancelled,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl RankError {
    /// Transport failures, 5xx and 429 may succeed on retry.
    pub fn is_retryable(&self) -> bool {
        match self {
            RankError::Transport(_) => true,
            RankError::Status(code) => *code >= 500 || *code == 429,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub rank: CweRank,
    pub score: f64,
}

/// All 25 weaknesses for one CVE, best first. Ties go to the lower
/// (more dangerous) CWE rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub cve_id: String,
    entries: Vec<RankedEntry>,
    /// Set when every score is equal, so the order is the tie rule alone.
    #[serde(default)]
    fallback: bool,
}

impl RankedList {
    /// Builds a ranking from scores indexed by rank (`scores[0]` is rank 1).
    pub fn from_scores(cve_id: impl Into<String>, scores: &[f64]) -> Result<Self, RankError> {
        if scores.len() != TOP_N {
            return Err(RankError::ScoreCount {
                expected: TOP_N,
                got: scores.len(),
            });
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(RankError::NonFinite(format!("rank {}", i + 1)));
        }
        let mut entries: Vec<RankedEntry> = scores
            .iter()
            .enumerate()
            .map(|(i, &score)| RankedEntry {
                rank: CweRank::from_index(i),
                // folds -0.0 into 0.0 so equal scores tie
                score: score + 0.0,
            })
            .collect();
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.rank.cmp(&b.rank)));
        let fallback = scores.iter().all(|&s| s == scores[0]);
        Ok(Self {
            cve_id: cve_id.into(),
            entries,
            fallback,
        })
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn is_fallback(&self) -> bool {
        self.fallback
    }

    pub fn top(&self) -> RankedEntry {
        self.entries[0]
    }

    pub fn ranks(&self) -> Vec<CweRank> {
        self.entries.iter().map(|e| e.rank).collect()
    }

    /// 1-based position of `rank` in the list.
    pub fn position_of(&self, rank: CweRank) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.rank == rank)
            .map(|p| p + 1)
    }

    pub fn score_of(&self, rank: CweRank) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.rank == rank)
            .map(|e| e.score)
    }

    /// Checks the invariants; used on lists that arrive from outside.
    pub fn validate(&self) -> Result<(), RankError> {
        if self.entries.len() != TOP_N {
            return Err(RankError::ScoreCount {
                expected: TOP_N,
                got: self.entries.len(),
            });
        }
        let mut seen = [false; TOP_N];
        for e in &self.entries {
            if !e.score.is_finite() {
                return Err(RankError::NonFinite(format!("rank {}", e.rank)));
            }
            if std::mem::replace(&mut seen[e.rank.index()], true) {
                return Err(RankError::DuplicateDocument(format!("rank {}", e.rank)));
            }
        }
        for pair in self.entries.windows(2) {
            let ordered = pair[0].score > pair[1].score
                || (pair[0].score == pair[1].score && pair[0].rank < pair[1].rank);
            if !ordered {
                return Err(RankError::Malformed {
                    line: 0,
                    message: format!(
                        "entries for ranks {} and {} out of order",
                        pair[0].rank, pair[1].rank
                    ),
                });
            }
        }
        Ok(())
    }
}
