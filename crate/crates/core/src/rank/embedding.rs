use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RankError, RankedList};
use crate::corpus::{Catalog, CveRecord, CweRank, TOP_N};
use crate::preprocess::Preprocessor;

pub fn cve_key(cve_id: &str) -> String {
    format!("cve:{cve_id}")
}

pub fn cwe_key(cwe_id: &str) -> String {
    format!("cwe:{cwe_id}")
}

/// One line of the store file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredVector {
    pub key: String,
    pub sent: usize,
    pub dim: usize,
    pub vec: Vec<f64>,
}

/// Sentence vectors keyed by document key and sentence index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: Option<usize>,
    vectors: BTreeMap<String, BTreeMap<usize, Vec<f64>>>,
}

impl EmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Shared vector dimension, once the first vector is inserted.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(
        &mut self,
        key: impl Into<String>,
        sent: usize,
        vec: Vec<f64>,
    ) -> Result<(), RankError> {
        let key = key.into();
        if vec.is_empty() {
            return Err(RankError::DimMismatch {
                expected: self.dim.unwrap_or(1),
                got: 0,
            });
        }
        if let Some(expected) = self.dim {
            if vec.len() != expected {
                return Err(RankError::DimMismatch {
                    expected,
                    got: vec.len(),
                });
            }
        }
        if vec.iter().any(|x| !x.is_finite()) {
            return Err(RankError::InvalidVector { key, index: sent });
        }
        self.dim = Some(vec.len());
        self.vectors.entry(key).or_default().insert(sent, vec);
        Ok(())
    }

    pub fn get(&self, key: &str, sent: usize) -> Option<&[f64]> {
        self.vectors.get(key)?.get(&sent).map(Vec::as_slice)
    }

    /// Vectors `0..count` for `key`, in order.
    pub fn sentences(&self, key: &str, count: usize) -> Result<Vec<&[f64]>, RankError> {
        (0..count)
            .map(|i| {
                self.get(key, i).ok_or_else(|| RankError::MissingVector {
                    key: key.to_string(),
                    index: i,
                })
            })
            .collect()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    pub fn read_jsonl(reader: impl Read) -> Result<Self, RankError> {
        let mut store = Self::new();
        for (n, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| RankError::Malformed {
                line: n + 1,
                message,
            };
            let v: StoredVector =
                serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            if v.dim != v.vec.len() {
                return Err(malformed(format!(
                    "dim {} but {} components",
                    v.dim,
                    v.vec.len()
                )));
            }
            store
                .insert(v.key, v.sent, v.vec)
                .map_err(|e| malformed(e.to_string()))?;
        }
        Ok(store)
    }

    pub fn write_jsonl(&self, writer: impl Write) -> Result<(), RankError> {
        let mut out = BufWriter::new(writer);
        for (key, sents) in &self.vectors {
            for (&sent, vec) in sents {
                let line = StoredVector {
                    key: key.clone(),
                    sent,
                    dim: vec.len(),
                    vec: vec.clone(),
                };
                serde_json::to_writer(&mut out, &line)?;
                out.write_all(b"\n")?;
            }
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

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// How sentence-pair cosines collapse into one document score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

impl Aggregation {
    /// Empty input scores 0.
    pub fn apply(self, pair_scores: &[f64]) -> f64 {
        if pair_scores.is_empty() {
            return 0.0;
        }
        match self {
            Aggregation::Max => pair_scores
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
            Aggregation::Mean => pair_scores.iter().sum::<f64>() / pair_scores.len() as f64,
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            other => Err(format!(
                "unknown aggregation {other:?}, expected max or mean"
            )),
        }
    }
}

/// Cosine of every (query sentence, document sentence) pair, query-major.
pub fn sentence_scores(query: &[&[f64]], document: &[&[f64]]) -> Vec<f64> {
    query
        .iter()
        .flat_map(|q| document.iter().map(move |d| cosine(q, d)))
        .collect()
}

/// Ranks weaknesses by sentence-embedding similarity read from a store.
#[derive(Debug, Clone)]
pub struct CosineRanker {
    cwe_keys: Vec<String>,
    cwe_sentence_counts: Vec<usize>,
    aggregation: Aggregation,
    preprocessor: Preprocessor,
}

impl CosineRanker {
    /// Sentence counts come from segmenting the collated catalog texts.
    pub fn new(catalog: &Catalog, aggregation: Aggregation, preprocessor: Preprocessor) -> Self {
        let counts = catalog
            .collated_all()
            .iter()
            .map(|c| c.sentences.len())
            .collect();
        Self::with_sentence_counts(catalog, counts, aggregation, preprocessor)
    }

    pub fn with_sentence_counts(
        catalog: &Catalog,
        cwe_sentence_counts: Vec<usize>,
        aggregation: Aggregation,
        preprocessor: Preprocessor,
    ) -> Self {
        assert_eq!(
            cwe_sentence_counts.len(),
            TOP_N,
            "one sentence count per weakness"
        );
        Self {
            cwe_keys: CweRank::all().map(|r| cwe_key(catalog.cwe_id(r))).collect(),
            cwe_sentence_counts,
            aggregation,
            preprocessor,
        }
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    /// Number of CVE sentences the store must hold for `cve`.
    pub fn cve_sentence_count(&self, cve: &CveRecord) -> usize {
        self.preprocessor.sentences(&cve.query_text()).len()
    }

    pub fn rank(&self, cve: &CveRecord, store: &EmbeddingStore) -> Result<RankedList, RankError> {
        self.rank_sentences(cve.cve_id.as_str(), self.cve_sentence_count(cve), store)
    }

    /// Ranks using `cve_sentences` stored vectors under `cve:{cve_id}`.
    pub fn rank_sentences(
        &self,
        cve_id: &str,
        cve_sentences: usize,
        store: &EmbeddingStore,
    ) -> Result<RankedList, RankError> {
        let query = store.sentences(&cve_key(cve_id), cve_sentences)?;
        let mut scores = Vec::with_capacity(TOP_N);
        for (key, &count) in self.cwe_keys.iter().zip(&self.cwe_sentence_counts) {
            let doc = store.sentences(key, count)?;
            scores.push(self.aggregation.apply(&sentence_scores(&query, &doc)));
        }
        RankedList::from_scores(cve_id, &scores)
    }
}

pub fn cosine_sentence_rank(
    cve: &CveRecord,
    catalog: &Catalog,
    store: &EmbeddingStore,
    aggregation: Aggregation,
    preprocessor: &Preprocessor,
) -> Result<RankedList, RankError> {
    CosineRanker::new(catalog, aggregation, preprocessor.clone()).rank(cve, store)
}
