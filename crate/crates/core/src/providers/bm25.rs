use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.75 }
    }
}

/// Document frequencies and average length over a small corpus (the three
/// stance documents).
#[derive(Debug, Clone)]
pub struct CorpusStats {
    n_docs: usize,
    avg_len: f64,
    doc_freq: HashMap<String, usize>,
}

impl CorpusStats {
    pub fn build<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut total = 0usize;
        for d in docs {
            let toks = tokenize(d.as_ref());
            total += toks.len();
            let mut uniq: Vec<String> = toks;
            uniq.sort_unstable();
            uniq.dedup();
            for t in uniq {
                *doc_freq.entry(t).or_default() += 1;
            }
        }
        let n_docs = docs.len();
        CorpusStats {
            n_docs,
            avg_len: if n_docs == 0 { 0.0 } else { total as f64 / n_docs as f64 },
            doc_freq,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    /// ln(1 + (N - n + 0.5) / (n + 0.5)); never negative, even for terms
    /// present in every document of a three-document corpus.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_freq(term) as f64;
        let big_n = self.n_docs as f64;
        (1.0 + (big_n - n + 0.5) / (n + 0.5)).ln()
    }
}

/// Okapi BM25 of `query` against `document`. Repeated query terms
/// contribute once per occurrence.
pub fn bm25_score(query: &str, document: &str, stats: &CorpusStats, params: Bm25Params) -> Result<f64> {
    let q = tokenize(query);
    if q.is_empty() {
        return Err(Error::Invalid("BM25 query has no tokens".into()));
    }
    let doc = tokenize(document);
    let dl = doc.len() as f64;
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for t in &doc {
        *tf.entry(t.as_str()).or_default() += 1;
    }
    let avg = if stats.avg_len > 0.0 { stats.avg_len } else { 1.0 };
    let norm = params.k1 * (1.0 - params.b + params.b * dl / avg);
    let mut score = 0.0;
    for term in &q {
        let f = tf.get(term.as_str()).copied().unwrap_or(0) as f64;
        if f == 0.0 {
            continue;
        }
        score += stats.idf(term) * f * (params.k1 + 1.0) / (f + norm);
    }
    Ok(score)
}
