//! Ranking metrics, stratified splits, training-pair export and F1 scoring
//! of generated weakness names.

mod export;
mod f1;
mod metrics;
mod split;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use export::{export_training_pairs, save_training_pairs, write_training_pairs, TrainingPair};
pub use f1::{
    macro_average, macro_f1, normalize_label, read_predictions, ClassScore, F1Report, LabelClass,
    Prediction,
};
pub use metrics::{
    average_precision_at, average_precision_at_k, evaluate, ndcg_at, ndcg_at_k, reciprocal_rank,
    reciprocal_rank_at, render_table, ChainPolicy, EvalReport, DEFAULT_KS,
};
pub use split::{stratified_split, Split, SplitSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cutoff k must be at least 1, got {0}")]
    InvalidK(usize),
    #[error("no ranking for gold row {0}")]
    MissingRanking(String),
    #[error("ranking for {cve_id} does not contain rank {rank}")]
    TruthAbsent { cve_id: String, rank: u8 },
    #[error("no CVE text for {0}")]
    MissingRecord(String),
    #[error("negatives per positive must be 1 or 2, got {0}")]
    Negatives(usize),
    #[error("{0}")]
    Split(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Write(std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl EvalError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
