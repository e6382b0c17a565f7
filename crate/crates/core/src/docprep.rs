//! Construction of the three unlabeled stance documents.
//!
//! Statements come from a foreign labeled dataset. A statement is kept only
//! if its embedding is dissimilar (cosine below the threshold) to every
//! train and test sample of the evaluation data; the survivors are bucketed
//! by their hidden gold stance and joined into one document per stance.
//! No label text is ever written into a document.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{write_atomic, write_jsonl};
use crate::error::{Error, Result};
use crate::model::{Dataset, Sample, StanceLabel};
use crate::providers::{cosine, Embedder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DocPrepConfig {
    pub threshold: f64,
    pub max_per_bucket: usize,
    pub separator: String,
}

impl Default for DocPrepConfig {
    fn default() -> Self {
        DocPrepConfig {
            threshold: 0.05,
            max_per_bucket: 200,
            separator: "[SEP]".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub source_id: String,
    pub bucket: StanceLabel,
    pub max_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceDocuments {
    pub favor_doc: String,
    pub against_doc: String,
    pub neutral_doc: String,
    pub provenance: Vec<ProvenanceEntry>,
}

const DOC_FILES: [&str; 3] = ["favor.txt", "against.txt", "neutral.txt"];
const PROVENANCE_FILE: &str = "provenance.jsonl";

impl StanceDocuments {
    pub fn from_texts(favor: impl Into<String>, against: impl Into<String>, neutral: impl Into<String>) -> Self {
        StanceDocuments {
            favor_doc: favor.into(),
            against_doc: against.into(),
            neutral_doc: neutral.into(),
            provenance: Vec::new(),
        }
    }

    /// Documents in (favor, against, neutral) order.
    pub fn as_array(&self) -> [&str; 3] {
        [&self.favor_doc, &self.against_doc, &self.neutral_doc]
    }

    pub fn file_names() -> [&'static str; 4] {
        [DOC_FILES[0], DOC_FILES[1], DOC_FILES[2], PROVENANCE_FILE]
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        for (name, body) in DOC_FILES.iter().zip(self.as_array()) {
            write_atomic(&dir.join(name), body.as_bytes())?;
        }
        write_jsonl(&dir.join(PROVENANCE_FILE), &self.provenance)
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(format!("reading {}", p.display()), e))
        };
        let provenance = read(PROVENANCE_FILE)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(StanceDocuments {
            favor_doc: read(DOC_FILES[0])?,
            against_doc: read(DOC_FILES[1])?,
            neutral_doc: read(DOC_FILES[2])?,
            provenance,
        })
    }
}

/// `text [SEP] target` on a single line.
pub fn statement(sample: &Sample, separator: &str) -> String {
    let flat = |s: &str| s.split(['\n', '\r']).map(str::trim).filter(|p| !p.is_empty()).collect::<Vec<_>>().join(" ");
    format!("{} {} {}", flat(&sample.text), separator, flat(&sample.target))
}

/// Embeds every statement in `samples`, in order.
pub fn embed_statements(samples: &[&Sample], embedder: &dyn Embedder, separator: &str) -> Result<Vec<Vec<f64>>> {
    samples.par_iter().map(|s| embedder.embed(&statement(s, separator)).map(|v| v.values)).collect()
}

/// Highest cosine similarity between `v` and any of `pool`.
pub fn max_similarity(v: &[f64], pool: &[Vec<f64>]) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for e in pool {
        best = best.max(cosine(v, e)?);
    }
    Ok(best)
}

pub fn build_documents(source: &Dataset, eval_train: &Dataset, eval_test: &Dataset, embedder: &dyn Embedder, cfg: &DocPrepConfig) -> Result<StanceDocuments> {
    let eval: Vec<&Sample> = eval_train.samples.iter().chain(&eval_test.samples).collect();
    let eval_emb = embed_statements(&eval, embedder, &cfg.separator)?;

    let labeled: Vec<(&Sample, StanceLabel)> = source.samples.iter().filter_map(|s| s.gold.map(|g| (s, g))).collect();
    let refs: Vec<&Sample> = labeled.iter().map(|(s, _)| *s).collect();
    let src_emb = embed_statements(&refs, embedder, &cfg.separator)?;
    let sims = src_emb
        .par_iter()
        .map(|v| {
            if eval_emb.is_empty() {
                Ok(f64::NEG_INFINITY)
            } else {
                max_similarity(v, &eval_emb)
            }
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut buckets: [Vec<(usize, f64)>; 3] = Default::default();
    for (i, ((_, gold), sim)) in labeled.iter().zip(&sims).enumerate() {
        if *sim < cfg.threshold {
            buckets[gold.index()].push((i, *sim));
        }
    }

    let mut docs: [String; 3] = Default::default();
    let mut provenance = Vec::new();
    for (label, bucket) in StanceLabel::ALL.iter().zip(buckets.iter_mut()) {
        if bucket.is_empty() {
            return Err(Error::EmptyBucket { bucket: label.as_str().into() });
        }
        bucket.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        bucket.truncate(cfg.max_per_bucket.max(1));
        let lines: Vec<String> = bucket.iter().map(|&(i, _)| statement(labeled[i].0, &cfg.separator)).collect();
        docs[label.index()] = lines.join("\n");
        provenance.extend(bucket.iter().map(|&(i, sim)| ProvenanceEntry {
            source_id: labeled[i].0.id.clone(),
            bucket: *label,
            max_similarity: sim,
        }));
    }
    let [favor_doc, against_doc, neutral_doc] = docs;
    Ok(StanceDocuments {
        favor_doc,
        against_doc,
        neutral_doc,
        provenance,
    })
}
