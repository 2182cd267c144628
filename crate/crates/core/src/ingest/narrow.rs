use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::corpus::{Catalog, CveId, CveRecord, CweRank, TOP_N};
use crate::preprocess::{tokenize, Stopwords};

/// TF.IDF vectors over a vocabulary fitted on the 25 catalog texts.
///
/// Term weights are raw counts times `ln(N / (1 + df)) + 1`, and every
/// vector is scaled to unit length.
#[derive(Debug, Clone)]
pub struct TfIdfModel {
    idf: HashMap<String, f64>,
    documents: Vec<BTreeMap<String, f64>>,
    stopwords: Stopwords,
}

impl TfIdfModel {
    pub fn fit(catalog: &Catalog, stopwords: Stopwords) -> Self {
        let docs: Vec<Vec<String>> = CweRank::all()
            .map(|r| tokenize(&catalog.collated_text(r), &stopwords))
            .collect();
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in &docs {
            let mut seen: Vec<&String> = doc.iter().collect();
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let idf: HashMap<String, f64> = df
            .into_iter()
            .map(|(t, d)| (t, (n / (1.0 + d as f64)).ln() + 1.0))
            .collect();
        let mut model = Self {
            idf,
            documents: Vec::new(),
            stopwords,
        };
        model.documents = docs.iter().map(|d| model.vectorize(d)).collect();
        model
    }

    pub fn vocabulary_size(&self) -> usize {
        self.idf.len()
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        tokenize(text, &self.stopwords)
    }

    /// Unit-length weights for in-vocabulary tokens. Ordered so sums are
    /// bit-identical from run to run.
    pub fn vectorize(&self, tokens: &[String]) -> BTreeMap<String, f64> {
        let mut v: BTreeMap<String, f64> = BTreeMap::new();
        for t in tokens {
            if let Some(idf) = self.idf.get(t) {
                *v.entry(t.clone()).or_default() += idf;
            }
        }
        let norm = v.values().map(|w| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.values_mut().for_each(|w| *w /= norm);
        }
        v
    }

    /// Cosine against each catalog text, indexed by rank.
    pub fn similarities(&self, tokens: &[String]) -> Vec<f64> {
        let q = self.vectorize(tokens);
        self.documents
            .iter()
            .map(|d| {
                q.iter()
                    .map(|(t, w)| w * d.get(t).copied().unwrap_or(0.0))
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub cve_id: CveId,
    pub best_rank: CweRank,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NarrowLimit {
    /// Keep the `n` best-scoring records.
    TopN(usize),
    /// Keep records scoring at least this much.
    MinScore(f64),
}

impl Default for NarrowLimit {
    fn default() -> Self {
        NarrowLimit::TopN(5000)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Narrowed {
    pub candidates: Vec<Candidate>,
    /// Records that could not be scored, with the reason.
    pub dropped: Vec<(CveId, String)>,
}

/// Scores every record by its best TF.IDF cosine against the catalog and
/// keeps the most promising ones, best first. Equal scores order by id.
pub fn narrow_candidates(
    records: &[CveRecord],
    catalog: &Catalog,
    stopwords: &Stopwords,
    limit: NarrowLimit,
) -> Narrowed {
    let model = TfIdfModel::fit(catalog, stopwords.clone());
    let mut out = Narrowed::default();
    for record in records {
        let tokens = model.tokens(&record.query_text());
        if tokens.is_empty() {
            log::info!("{}: no terms left after stopword removal", record.cve_id);
            out.dropped.push((
                record.cve_id.clone(),
                "no terms after stopword removal".into(),
            ));
            continue;
        }
        let sims = model.similarities(&tokens);
        let mut best = 0;
        for (i, &s) in sims.iter().enumerate().take(TOP_N) {
            if s > sims[best] {
                best = i;
            }
        }
        out.candidates.push(Candidate {
            cve_id: record.cve_id.clone(),
            best_rank: CweRank::from_index(best),
            score: sims[best],
        });
    }
    out.candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.cve_id.cmp(&b.cve_id))
    });
    match limit {
        NarrowLimit::TopN(n) => out.candidates.truncate(n),
        NarrowLimit::MinScore(min) => out.candidates.retain(|c| c.score >= min),
    }
    out
}

/// CSV with header `cve_id,best_rank,score`.
pub fn write_candidates<W: Write>(candidates: &[Candidate], writer: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cve_id", "best_rank", "score"])?;
    for c in candidates {
        w.write_record([
            c.cve_id.to_string(),
            c.best_rank.to_string(),
            format!("{:.6}", c.score),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn save_candidates(candidates: &[Candidate], path: &Path) -> Result<(), IngestError> {
    let file = std::fs::File::create(path).map_err(|e| IngestError::io(path, e))?;
    write_candidates(candidates, file)
}

pub fn load_candidates(path: &Path) -> Result<Vec<Candidate>, IngestError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
