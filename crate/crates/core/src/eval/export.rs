use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{Catalog, CveRecord, CweRank, DatasetRow, TOP_N};
use crate::preprocess::Preprocessor;

/// One query-document pair; relevance 1 marks the annotated weakness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub cve_id: String,
    pub cwe_id: String,
    pub query: String,
    pub document: String,
    pub relevance: u8,
}

/// For every single-label row, the positive pair followed by `negatives`
/// pairs whose weaknesses are drawn without replacement from the other 24.
/// Causal rows are skipped. One seeded generator walks the rows in order.
pub fn export_training_pairs(
    rows: &[DatasetRow],
    records: &HashMap<String, CveRecord>,
    catalog: &Catalog,
    preprocessor: &Preprocessor,
    negatives: usize,
    seed: u64,
) -> Result<Vec<TrainingPair>, EvalError> {
    if !(1..=2).contains(&negatives) {
        return Err(EvalError::Negatives(negatives));
    }
    let documents: Vec<String> = CweRank::all().map(|r| catalog.collated_text(r)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(rows.len() * (1 + negatives));
    for row in rows.iter().filter(|r| r.assignment.is_single()) {
        let record = records
            .get(row.cve_id.as_str())
            .ok_or_else(|| EvalError::MissingRecord(row.cve_id.to_string()))?;
        let query = preprocessor.clean_text(&record.query_text());
        let positive = row.assignment.head();
        let pair = |rank: CweRank, relevance: u8| TrainingPair {
            cve_id: row.cve_id.to_string(),
            cwe_id: catalog.cwe_id(rank).to_string(),
            query: query.clone(),
            document: documents[rank.index()].clone(),
            relevance,
        };
        pairs.push(pair(positive, 1));
        for i in sample(&mut rng, TOP_N - 1, negatives) {
            // indices past the positive shift up by one to skip it
            let index = if i >= positive.index() { i + 1 } else { i };
            pairs.push(pair(CweRank::from_index(index), 0));
        }
    }
    Ok(pairs)
}

pub fn write_training_pairs<W: Write>(pairs: &[TrainingPair], writer: W) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(writer);
    for p in pairs {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n").map_err(EvalError::Write)?;
    }
    out.flush().map_err(EvalError::Write)
}

pub fn save_training_pairs(pairs: &[TrainingPair], path: &Path) -> Result<(), EvalError> {
    let file = std::fs::File::create(path).map_err(|e| EvalError::io(path, e))?;
    write_training_pairs(pairs, file)
}
