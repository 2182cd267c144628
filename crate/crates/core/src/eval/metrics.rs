use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{CweRank, DatasetRow};
use crate::rank::RankedList;

/// Cutoffs reported by default.
pub const DEFAULT_KS: [usize; 4] = [1, 2, 3, 5];

/// `1 / position` for a 1-based position.
pub fn reciprocal_rank_at(position: usize) -> f64 {
    1.0 / position as f64
}

/// Truncated average precision with one relevant document.
pub fn average_precision_at(position: usize, k: usize) -> Result<f64, EvalError> {
    check_k(k)?;
    Ok(if position <= k {
        1.0 / position as f64
    } else {
        0.0
    })
}

/// Binary-gain NDCG with one relevant document, so the ideal DCG is 1.
pub fn ndcg_at(position: usize, k: usize) -> Result<f64, EvalError> {
    check_k(k)?;
    Ok(if position <= k {
        1.0 / (position as f64 + 1.0).log2()
    } else {
        0.0
    })
}

fn check_k(k: usize) -> Result<(), EvalError> {
    if k == 0 {
        Err(EvalError::InvalidK(k))
    } else {
        Ok(())
    }
}

fn position(ranked: &RankedList, truth: CweRank) -> Result<usize, EvalError> {
    ranked
        .position_of(truth)
        .ok_or_else(|| EvalError::TruthAbsent {
            cve_id: ranked.cve_id.clone(),
            rank: truth.get(),
        })
}

pub fn reciprocal_rank(ranked: &RankedList, truth: CweRank) -> Result<f64, EvalError> {
    Ok(reciprocal_rank_at(position(ranked, truth)?))
}

pub fn average_precision_at_k(
    ranked: &RankedList,
    truth: CweRank,
    k: usize,
) -> Result<f64, EvalError> {
    average_precision_at(position(ranked, truth)?, k)
}

pub fn ndcg_at_k(ranked: &RankedList, truth: CweRank, k: usize) -> Result<f64, EvalError> {
    ndcg_at(position(ranked, truth)?, k)
}

/// Mean metrics of one ranker over a set of queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub mrr: f64,
    pub map_at: BTreeMap<usize, f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
    pub n_queries: usize,
}

impl EvalReport {
    /// Relations that must hold when each query has one relevant document.
    /// Returns every violation found; `tolerance` absorbs rounding of reference values.
    pub fn check_invariants(&self, tolerance: f64) -> Result<(), Vec<String>> {
        let mut problems = Vec::new();
        let in_unit = |v: f64| (-tolerance..=1.0 + tolerance).contains(&v);
        if !in_unit(self.mrr) {
            problems.push(format!("MRR {} outside [0, 1]", self.mrr));
        }
        if let (Some(m1), Some(n1)) = (self.map_at.get(&1), self.ndcg_at.get(&1)) {
            if (m1 - n1).abs() > tolerance {
                problems.push(format!("MAP@1 {m1} != NDCG@1 {n1}"));
            }
        }
        for (name, series) in [("MAP", &self.map_at), ("NDCG", &self.ndcg_at)] {
            let values: Vec<(&usize, &f64)> = series.iter().collect();
            for pair in values.windows(2) {
                if *pair[1].1 < pair[0].1 - tolerance {
                    problems.push(format!(
                        "{name}@{} {} < {name}@{} {}",
                        pair[1].0, pair[1].1, pair[0].0, pair[0].1
                    ));
                }
            }
            for (k, v) in series {
                if !in_unit(*v) {
                    problems.push(format!("{name}@{k} {v} outside [0, 1]"));
                }
            }
        }
        for (k, map) in &self.map_at {
            if self.mrr < map - tolerance {
                problems.push(format!("MRR {} < MAP@{k} {map}", self.mrr));
            }
            if let Some(ndcg) = self.ndcg_at.get(k) {
                if *ndcg < map - tolerance {
                    problems.push(format!("NDCG@{k} {ndcg} < MAP@{k} {map}"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Which gold rows take part in the evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ChainPolicy {
    /// Causal rows are left out.
    #[default]
    Exclude,
    /// A causal row counts with the first weakness of its chain as truth.
    FirstElement,
}

/// Means of the per-query metrics over every eligible gold row.
pub fn evaluate(
    model: &str,
    rankings: &HashMap<String, RankedList>,
    gold: &[DatasetRow],
    ks: &[usize],
    chains: ChainPolicy,
) -> Result<EvalReport, EvalError> {
    for &k in ks {
        check_k(k)?;
    }
    let mut positions = Vec::new();
    for row in gold {
        let truth = match (row.assignment.is_single(), chains) {
            (true, _) => row.assignment.head(),
            (false, ChainPolicy::FirstElement) => row.assignment.head(),
            (false, ChainPolicy::Exclude) => continue,
        };
        let ranked = rankings
            .get(row.cve_id.as_str())
            .ok_or_else(|| EvalError::MissingRanking(row.cve_id.to_string()))?;
        positions.push(position(ranked, truth)?);
    }
    let n = positions.len();
    let mean = |f: &dyn Fn(usize) -> f64| -> f64 {
        if n == 0 {
            return 0.0;
        }
        positions.iter().map(|&p| f(p)).sum::<f64>() / n as f64
    };
    let mut map_at = BTreeMap::new();
    let mut ndcg = BTreeMap::new();
    for &k in ks {
        map_at.insert(k, mean(&|p| average_precision_at(p, k).expect("k checked")));
        ndcg.insert(k, mean(&|p| ndcg_at(p, k).expect("k checked")));
    }
    Ok(EvalReport {
        model: model.to_string(),
        mrr: mean(&reciprocal_rank_at),
        map_at,
        ndcg_at: ndcg,
        n_queries: n,
    })
}

/// Plain-text table with one row per report: model, MRR, MAP@k..., NDCG@k...
pub fn render_table(reports: &[EvalReport]) -> String {
    let ks: Vec<usize> = {
        let mut ks: Vec<usize> = reports
            .iter()
            .flat_map(|r| r.map_at.keys().copied())
            .collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    };
    let mut header = vec!["Model".to_string(), "MRR".to_string()];
    header.extend(ks.iter().map(|k| format!("MAP@{k}")));
    header.extend(ks.iter().map(|k| format!("NDCG@{k}")));
    let fmt = |v: Option<&f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.model.clone(), format!("{:.4}", r.mrr)];
            row.extend(ks.iter().map(|k| fmt(r.map_at.get(k))));
            row.extend(ks.iter().map(|k| fmt(r.ndcg_at.get(k))));
            row
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&rows) {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
