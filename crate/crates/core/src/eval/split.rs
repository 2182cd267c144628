use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{CweRank, DatasetRow, TOP_N};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<DatasetRow>,
    pub test: Vec<DatasetRow>,
    /// Causal rows left out of both sides.
    pub excluded_causal: usize,
    /// Ranks whose class was too small to split.
    pub undersized: Vec<CweRank>,
}

/// Per-label shuffle and cut of the single-label rows.
///
/// Each class is ordered by id, shuffled with one seeded generator visited
/// in rank order, and cut at `round(n * train_fraction)`. Classes of fewer
/// than two rows go entirely to train. Both sides come back ordered by id.
pub fn stratified_split(rows: &[DatasetRow], spec: SplitSpec) -> Result<Split, EvalError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(EvalError::Split(format!(
            "train fraction must be strictly between 0 and 1, got {}",
            spec.train_fraction
        )));
    }
    let mut classes: Vec<Vec<&DatasetRow>> = vec![Vec::new(); TOP_N];
    let mut split = Split::default();
    for row in rows {
        if row.assignment.is_single() {
            classes[row.assignment.head().index()].push(row);
        } else {
            split.excluded_causal += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for (i, class) in classes.iter_mut().enumerate() {
        if class.is_empty() {
            continue;
        }
        class.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));
        if class.len() < 2 {
            let rank = CweRank::from_index(i);
            log::warn!("label {rank} has {} row(s); all go to train", class.len());
            split.undersized.push(rank);
            split.train.extend(class.iter().map(|r| (*r).clone()));
            continue;
        }
        class.shuffle(&mut rng);
        let n_train = (class.len() as f64 * spec.train_fraction).round() as usize;
        split
            .train
            .extend(class[..n_train].iter().map(|r| (*r).clone()));
        split
            .test
            .extend(class[n_train..].iter().map(|r| (*r).clone()));
    }
    split.train.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));
    split.test.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));
    Ok(split)
}
