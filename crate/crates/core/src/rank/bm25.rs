use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{RankError, RankedList};
use crate::corpus::{Catalog, CveRecord, CweRank};
use crate::preprocess::{tokenize, Preprocessor};

/// Okapi BM25 parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    /// Term-frequency saturation, > 0.
    pub k1: f64,
    /// Length normalization, in [0, 1].
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, RankError> {
        let params = Self { k1, b };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), RankError> {
        if !(self.k1.is_finite() && self.k1 > 0.0) {
            return Err(RankError::Params(format!(
                "k1 must be > 0, got {}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(RankError::Params(format!(
                "b must be in [0, 1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

/// Term statistics over a fixed, small document collection.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    term_freqs: Vec<HashMap<String, u32>>,
    lengths: Vec<f64>,
    avg_length: f64,
    doc_freq: HashMap<String, usize>,
}

impl Bm25Index {
    pub fn new(documents: &[Vec<String>], params: Bm25Params) -> Result<Self, RankError> {
        params.validate()?;
        let mut term_freqs = Vec::with_capacity(documents.len());
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for doc in documents {
            let mut tf: HashMap<String, u32> = HashMap::new();
            for term in doc {
                *tf.entry(term.clone()).or_default() += 1;
            }
            for term in tf.keys() {
                *doc_freq.entry(term.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let lengths: Vec<f64> = documents.iter().map(|d| d.len() as f64).collect();
        let avg_length = if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<f64>() / lengths.len() as f64
        };
        Ok(Self {
            params,
            term_freqs,
            lengths,
            avg_length,
            doc_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.term_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.term_freqs.is_empty()
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, always positive.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// One score per document. Repeated query terms count once per occurrence.
    pub fn scores(&self, query: &[String]) -> Vec<f64> {
        let Bm25Params { k1, b } = self.params;
        let mut scores = vec![0.0; self.len()];
        for term in query {
            if !self.doc_freq.contains_key(term) {
                continue;
            }
            let idf = self.idf(term);
            for (d, tf) in self.term_freqs.iter().enumerate() {
                let Some(&f) = tf.get(term) else { continue };
                let f = f64::from(f);
                let norm = if self.avg_length > 0.0 {
                    1.0 - b + b * self.lengths[d] / self.avg_length
                } else {
                    1.0
                };
                scores[d] += idf * (f * (k1 + 1.0)) / (f + k1 * norm);
            }
        }
        scores
    }
}

/// BM25 with the 25 collated weakness texts as the document collection.
#[derive(Debug, Clone)]
pub struct Bm25Ranker {
    index: Bm25Index,
    preprocessor: Preprocessor,
}

impl Bm25Ranker {
    pub fn new(
        catalog: &Catalog,
        params: Bm25Params,
        preprocessor: Preprocessor,
    ) -> Result<Self, RankError> {
        let documents: Vec<Vec<String>> = CweRank::all()
            .map(|r| tokenize(&catalog.collated_text(r), &preprocessor.stopwords))
            .collect();
        Ok(Self {
            index: Bm25Index::new(&documents, params)?,
            preprocessor,
        })
    }

    pub fn index(&self) -> &Bm25Index {
        &self.index
    }

    pub fn query_tokens(&self, cve: &CveRecord) -> Vec<String> {
        self.preprocessor.tokens(&cve.query_text())
    }

    pub fn rank(&self, cve: &CveRecord) -> Result<RankedList, RankError> {
        let query = self.query_tokens(cve);
        if query.is_empty() {
            log::warn!(
                "{}: empty query after cleanup, falling back to rank order",
                cve.cve_id
            );
        }
        RankedList::from_scores(cve.cve_id.to_string(), &self.index.scores(&query))
    }
}

pub fn bm25_rank(
    cve: &CveRecord,
    catalog: &Catalog,
    params: Bm25Params,
    preprocessor: &Preprocessor,
) -> Result<RankedList, RankError> {
    Bm25Ranker::new(catalog, params, preprocessor.clone())?.rank(cve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CveId, RecordState};
    use crate::preprocess::Stopwords;
    use proptest::prelude::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn record(description: &str) -> CveRecord {
        CveRecord {
            cve_id: CveId::parse("CVE-2021-0001").unwrap(),
            title: String::new(),
            description: description.to_string(),
            state: RecordState::Accepted,
            nvd_labels: Default::default(),
        }
    }

    /// The formula written out term by term for the two-document toy corpus.
    #[test]
    fn toy_corpus_matches_hand_evaluation() {
        let docs = vec![words("buffer overflow write"), words("sql injection query")];
        let index = Bm25Index::new(&docs, Bm25Params::default()).unwrap();
        let scores = index.scores(&words("sql injection"));
        // N = 2, df = 1 for both terms: idf = ln(1 + 1.5 / 1.5) = ln 2.
        // |d| = avgdl = 3, tf = 1: term weight = 1 * 2.2 / (1 + 1.2) = 1.
        let expected = 2.0 * 2f64.ln();
        assert_eq!(scores[0], 0.0);
        assert!((scores[1] - expected).abs() < 1e-12);
        assert!(scores[1] > scores[0]);
    }

    #[test]
    fn length_normalization_prefers_shorter_document() {
        let docs = vec![
            words("sql injection"),
            words("sql injection filler filler filler filler"),
        ];
        let index = Bm25Index::new(&docs, Bm25Params::default()).unwrap();
        let scores = index.scores(&words("sql"));
        assert!(scores[0] > scores[1]);
        let flat = Bm25Index::new(&docs, Bm25Params::new(1.2, 0.0).unwrap()).unwrap();
        let flat_scores = flat.scores(&words("sql"));
        assert_eq!(flat_scores[0], flat_scores[1]);
    }

    #[test]
    fn params_are_validated() {
        assert!(Bm25Params::new(0.0, 0.5).is_err());
        assert!(Bm25Params::new(1.2, 1.5).is_err());
        assert!(Bm25Params::new(1.2, -0.1).is_err());
        assert!(Bm25Params::new(2.0, 1.0).is_ok());
    }

    #[test]
    fn no_overlap_gives_zero_scores_and_rank_order() {
        let catalog = Catalog::top25_2022();
        let list = bm25_rank(
            &record("zzqx wvvq"),
            &catalog,
            Bm25Params::default(),
            &Preprocessor::default(),
        )
        .unwrap();
        assert!(list.entries().iter().all(|e| e.score == 0.0));
        assert!(list.is_fallback());
        assert_eq!(list.top().rank.get(), 1);
    }

    #[test]
    fn empty_query_after_cleanup_falls_back() {
        let catalog = Catalog::top25_2022();
        let list = bm25_rank(
            &record("https://example.com 1.2.3 WordPress"),
            &catalog,
            Bm25Params::default(),
            &Preprocessor::default(),
        )
        .unwrap();
        assert!(list.is_fallback());
    }

    #[test]
    fn sql_injection_text_ranks_cwe_89_first() {
        let catalog = Catalog::top25_2022();
        let list = bm25_rank(
            &record("SQL injection in the login form allows attackers to execute arbitrary SQL commands via the username parameter."),
            &catalog,
            Bm25Params::default(),
            &Preprocessor::default(),
        )
        .unwrap();
        assert_eq!(catalog.cwe_id(list.top().rank), "CWE-89");
    }

    #[test]
    fn idf_is_positive_even_for_common_terms() {
        let docs = vec![words("a b"), words("a c"), words("a d")];
        let index = Bm25Index::new(&docs, Bm25Params::default()).unwrap();
        assert!(index.idf("a") > 0.0);
        assert!(index.idf("b") > index.idf("a"));
    }

    proptest! {
        #[test]
        fn repeating_the_query_preserves_order(
            query in prop::collection::vec(prop::sample::select(vec![
                "memory", "buffer", "sql", "command", "authentication", "file", "upload",
                "request", "xml", "race", "pointer", "free", "injection", "web", "page",
            ]), 1..8),
            times in 2usize..5,
        ) {
            let catalog = Catalog::top25_2022();
            let ranker = Bm25Ranker::new(&catalog, Bm25Params::default(), Preprocessor::default()).unwrap();
            let stop = Stopwords::default();
            let q: Vec<String> = tokenize(&query.join(" "), &stop);
            let repeated: Vec<String> = (0..times).flat_map(|_| q.clone()).collect();
            let once = ranker.index().scores(&q);
            let many = ranker.index().scores(&repeated);
            for (a, b) in once.iter().zip(&many) {
                prop_assert!((a * times as f64 - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
            let l1 = RankedList::from_scores("q", &once).unwrap().ranks();
            let l2 = RankedList::from_scores("q", &many).unwrap().ranks();
            prop_assert_eq!(l1, l2);
        }
    }
}
