//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export returns a JSON string or throws with a message. The
//! `*_json` functions hold the logic and are callable natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cwemap::corpus::{format_label, parse_label, Catalog, CveId, CveRecord, CweRank, RecordState};
use cwemap::eval::{average_precision_at, ndcg_at, reciprocal_rank_at};
use cwemap::preprocess::{cleanup, Preprocessor, RemovalCategory};
use cwemap::rank::{Bm25Params, Bm25Ranker};

#[derive(Debug, Serialize)]
struct RankedRow {
    position: usize,
    rank: u8,
    cwe_id: String,
    name: String,
    score: f64,
}

#[derive(Debug, Serialize)]
struct RemovedSpan {
    category: RemovalCategory,
    text: String,
}

#[derive(Debug, Serialize)]
struct RankOutput {
    cleaned: String,
    removed: Vec<RemovedSpan>,
    query_tokens: usize,
    fallback: bool,
    entries: Vec<RankedRow>,
}

#[derive(Debug, Serialize)]
struct LabelPart {
    rank: u8,
    cwe_id: String,
    name: String,
}

#[derive(Debug, Serialize)]
struct LabelOutput {
    canonical: String,
    causal: bool,
    chain: Vec<LabelPart>,
}

#[derive(Debug, Serialize)]
struct CutoffScores {
    k: usize,
    average_precision: f64,
    ndcg: f64,
}

#[derive(Debug, Serialize)]
struct MetricsOutput {
    position: usize,
    reciprocal_rank: f64,
    cutoffs: Vec<CutoffScores>,
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// BM25 ranking of all 25 weaknesses for a free-text description.
pub fn rank_json(description: &str, k1: f64, b: f64, preproc: bool) -> Result<String, String> {
    let catalog = Catalog::top25_2022();
    let params = Bm25Params::new(k1, b).map_err(|e| e.to_string())?;
    let preprocessor = if preproc {
        Preprocessor::default()
    } else {
        Preprocessor::default().without_cleanup()
    };
    let report = preproc.then(|| cleanup(description, &preprocessor.gazetteer));
    let record = CveRecord {
        cve_id: CveId::parse("CVE-0000-0000").map_err(|e| e.to_string())?,
        title: String::new(),
        description: description.to_string(),
        state: RecordState::Accepted,
        nvd_labels: Default::default(),
    };
    let ranker = Bm25Ranker::new(&catalog, params, preprocessor).map_err(|e| e.to_string())?;
    let query_tokens = ranker.query_tokens(&record).len();
    let list = ranker.rank(&record).map_err(|e| e.to_string())?;
    let entries = list
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let entry = catalog.entry(e.rank);
            RankedRow {
                position: i + 1,
                rank: e.rank.get(),
                cwe_id: entry.cwe_id.clone(),
                name: entry.name.clone(),
                score: e.score,
            }
        })
        .collect();
    to_json(&RankOutput {
        cleaned: report
            .as_ref()
            .map_or_else(|| description.to_string(), |r| r.output.clone()),
        removed: report
            .into_iter()
            .flat_map(|r| r.removed)
            .map(|r| RemovedSpan {
                category: r.category,
                text: r.text,
            })
            .collect(),
        query_tokens,
        fallback: list.is_fallback(),
        entries,
    })
}

/// Parses `a` or `a-b-...` and names each rank.
pub fn label_json(label: &str) -> Result<String, String> {
    let catalog = Catalog::top25_2022();
    let assignment = parse_label(label.trim()).map_err(|e| e.to_string())?;
    let chain = assignment
        .chain()
        .iter()
        .map(|&r| {
            let entry = catalog.entry(r);
            LabelPart {
                rank: r.get(),
                cwe_id: entry.cwe_id.clone(),
                name: entry.name.clone(),
            }
        })
        .collect();
    to_json(&LabelOutput {
        canonical: format_label(&assignment),
        causal: assignment.is_causal(),
        chain,
    })
}

/// Per-query scores when the relevant weakness sits at `position`.
pub fn metrics_json(position: usize, ks: &[usize]) -> Result<String, String> {
    if !(1..=cwemap::corpus::TOP_N).contains(&position) {
        return Err(format!("position must be in 1..=25, got {position}"));
    }
    let cutoffs = ks
        .iter()
        .map(|&k| {
            Ok(CutoffScores {
                k,
                average_precision: average_precision_at(position, k).map_err(|e| e.to_string())?,
                ndcg: ndcg_at(position, k).map_err(|e| e.to_string())?,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    to_json(&MetricsOutput {
        position,
        reciprocal_rank: reciprocal_rank_at(position),
        cutoffs,
    })
}

/// Position of the label's first weakness in a ranking from [`rank_json`].
pub fn position_of(ranking: &str, label: &str) -> Result<usize, String> {
    let head: CweRank = parse_label(label.trim()).map_err(|e| e.to_string())?.head();
    let parsed: serde_json::Value = serde_json::from_str(ranking).map_err(|e| e.to_string())?;
    parsed["entries"]
        .as_array()
        .and_then(|rows| {
            rows.iter()
                .position(|row| row["rank"].as_u64() == Some(head.get() as u64))
        })
        .map(|i| i + 1)
        .ok_or_else(|| "ranking does not contain the label".to_string())
}

#[wasm_bindgen]
pub fn rank(description: &str, k1: f64, b: f64, preproc: bool) -> Result<String, JsError> {
    rank_json(description, k1, b, preproc).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn label(label: &str) -> Result<String, JsError> {
    label_json(label).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn metrics(ranking: &str, label: &str, ks: &[u32]) -> Result<String, JsError> {
    let ks: Vec<usize> = ks.iter().map(|&k| k as usize).collect();
    position_of(ranking, label)
        .and_then(|p| metrics_json(p, &ks))
        .map_err(|e| JsError::new(&e))
}
