//! Relevance ranking of implicit rationales against the stance documents.
//!
//! Each rationale, joined with its target and prefixed by an instruction,
//! is scored against the favor, against and neutral documents. The three
//! raw scores pass through a per-class affine [`Calibration`] and a softmax
//! to give the rationale's [`RelevanceProfile`].

use serde::{Deserialize, Serialize};

use crate::docprep::StanceDocuments;
use crate::error::{Error, Result};
use crate::providers::{bm25_score, cosine, Bm25Params, CorpusStats, Embedder, LlmProvider, LlmRequest, RerankRequest, Reranker};

pub const DEFAULT_INSTRUCTION: &str = include_str!("../templates/rank_instruction.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    Reranker,
    Bm25,
    Cosine,
    LlmRank,
    LlmScores,
}

impl std::str::FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reranker" => Ok(ScorerKind::Reranker),
            "bm25" => Ok(ScorerKind::Bm25),
            "cosine" => Ok(ScorerKind::Cosine),
            "llm-rank" => Ok(ScorerKind::LlmRank),
            "llm-scores" => Ok(ScorerKind::LlmScores),
            other => Err(Error::Config(format!(
                "unknown scorer `{other}` (expected reranker, bm25, cosine, llm-rank or llm-scores)"
            ))),
        }
    }
}

/// Query construction switches; the two `false` settings reproduce the
/// no-instruction and no-target ablations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryOptions {
    pub use_instruction: bool,
    pub use_target: bool,
    pub target_separator: String,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions {
            use_instruction: true,
            use_target: true,
            target_separator: "[TGT]".into(),
        }
    }
}

/// Returns the instruction prepended to every query, or an empty string
/// when instructions are switched off.
pub fn build_instruction(template: &str, opts: &QueryOptions) -> String {
    if opts.use_instruction {
        template.trim().to_string()
    } else {
        String::new()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingQuery {
    pub instruction: String,
    pub rationale_text: String,
    pub target: Option<String>,
    pub separator: String,
}

impl RankingQuery {
    pub fn new(instruction: &str, rationale_text: &str, target: &str, opts: &QueryOptions) -> Self {
        RankingQuery {
            instruction: instruction.to_string(),
            rationale_text: rationale_text.to_string(),
            target: opts.use_target.then(|| target.to_string()),
            separator: opts.target_separator.clone(),
        }
    }

    /// `rationale [TGT] target`, or just the rationale without a target.
    pub fn query_text(&self) -> String {
        match &self.target {
            Some(t) => format!("{} {} {}", self.rationale_text, self.separator, t),
            None => self.rationale_text.clone(),
        }
    }

    /// Instruction followed by the query text.
    pub fn rendered(&self) -> String {
        if self.instruction.is_empty() {
            self.query_text()
        } else {
            format!("{} {}", self.instruction, self.query_text())
        }
    }
}

/// Per-class affine applied to raw scores before the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scale: [f64; 3],
    pub bias: [f64; 3],
    pub trainable: bool,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration::identity(true)
    }
}

impl Calibration {
    pub fn identity(trainable: bool) -> Self {
        Calibration {
            scale: [1.0; 3],
            bias: [0.0; 3],
            trainable,
        }
    }

    pub fn logits(&self, raw: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|j| self.scale[j] * raw[j] + self.bias[j])
    }

    pub fn is_identity(&self) -> bool {
        self.scale == [1.0; 3] && self.bias == [0.0; 3]
    }
}

/// Numerically stable softmax over three logits.
pub fn softmax(logits: &[f64; 3]) -> [f64; 3] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: [f64; 3] = std::array::from_fn(|j| (logits[j] - m).exp());
    let s: f64 = e.iter().sum();
    std::array::from_fn(|j| e[j] / s)
}

pub fn softmax3(raw: &[f64; 3], cal: &Calibration) -> Result<[f64; 3]> {
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid(format!("non-finite raw relevance scores {raw:?}")));
    }
    let logits = cal.logits(raw);
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid(format!("non-finite calibrated scores {logits:?}")));
    }
    Ok(softmax(&logits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceProfile {
    pub rationale_id: String,
    pub raw: [f64; 3],
    pub probs: [f64; 3],
}

impl RelevanceProfile {
    pub fn new(rationale_id: impl Into<String>, raw: [f64; 3], cal: &Calibration) -> Result<Self> {
        Ok(RelevanceProfile {
            rationale_id: rationale_id.into(),
            probs: softmax3(&raw, cal)?,
            raw,
        })
    }
}

/// Raw scores for the LLM-score ablation. The LLM already reports
/// probabilities, so their logarithms are used as raw scores: under the
/// identity calibration the softmax returns the reported distribution.
pub fn llm_scores_to_raw(scores: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|j| scores[j].max(1e-12).ln())
}

/// Everything a scorer may need besides the query.
pub struct Scorer<'a> {
    pub kind: ScorerKind,
    pub reranker: Option<&'a dyn Reranker>,
    pub embedder: Option<&'a dyn Embedder>,
    pub llm: Option<&'a dyn LlmProvider>,
    pub llm_model: String,
    pub bm25: Bm25Params,
    corpus: Option<CorpusStats>,
    doc_embeddings: Option<[Vec<f64>; 3]>,
}

impl<'a> Scorer<'a> {
    pub fn new(kind: ScorerKind, docs: &StanceDocuments) -> Self {
        let corpus = (kind == ScorerKind::Bm25).then(|| CorpusStats::build(&docs.as_array()));
        Scorer {
            kind,
            reranker: None,
            embedder: None,
            llm: None,
            llm_model: "mock".into(),
            bm25: Bm25Params::default(),
            corpus,
            doc_embeddings: None,
        }
    }

    pub fn with_reranker(mut self, r: &'a dyn Reranker) -> Self {
        self.reranker = Some(r);
        self
    }

    pub fn with_llm(mut self, llm: &'a dyn LlmProvider, model: impl Into<String>) -> Self {
        self.llm = Some(llm);
        self.llm_model = model.into();
        self
    }

    pub fn with_bm25(mut self, params: Bm25Params) -> Self {
        self.bm25 = params;
        self
    }

    /// Attaches the embedder and embeds the three documents once.
    pub fn with_embedder(mut self, e: &'a dyn Embedder, docs: &StanceDocuments) -> Result<Self> {
        if self.kind == ScorerKind::Cosine {
            let d = docs.as_array();
            self.doc_embeddings = Some([e.embed(d[0])?.values, e.embed(d[1])?.values, e.embed(d[2])?.values]);
        }
        self.embedder = Some(e);
        Ok(self)
    }

    fn missing(&self, what: &str) -> Error {
        Error::Config(format!("scorer {:?} needs a configured {what}", self.kind))
    }

    fn llm_rank(&self, llm: &dyn LlmProvider, q: &RankingQuery, doc: &str) -> f64 {
        let system = "You rate how relevant a query is to a document. Reply with a single number from 0 (irrelevant) to 10 (highly relevant) and nothing else.";
        let mut user = String::new();
        if !q.instruction.is_empty() {
            user.push_str(&format!("Instruction: {}\n", q.instruction));
        }
        user.push_str(&format!("Query: {}\nDocument:\n{}", q.query_text(), doc));
        let req = LlmRequest::new(self.llm_model.clone(), system, user);
        match llm.complete(&req) {
            Ok(reply) => parse_leading_number(&reply).unwrap_or_else(|| {
                log::warn!("LLM ranker reply `{}` has no number; using 0", reply.trim());
                0.0
            }),
            Err(e) => {
                log::warn!("LLM ranker call failed, using 0: {e}");
                0.0
            }
        }
    }

    /// Raw (favor, against, neutral) relevance of `q`. `llm_scores` is the
    /// rationale's normalized LLM triple, consulted only by the
    /// llm-scores scorer, which returns it verbatim.
    pub fn score_rationale(&self, q: &RankingQuery, docs: &StanceDocuments, llm_scores: Option<&[f64; 3]>) -> Result<[f64; 3]> {
        let d = docs.as_array();
        match self.kind {
            ScorerKind::Reranker => {
                let r = self.reranker.ok_or_else(|| self.missing("reranker"))?;
                let mut out = [0.0; 3];
                for (o, doc) in out.iter_mut().zip(d) {
                    *o = r.score(&RerankRequest {
                        instruction: q.instruction.clone(),
                        query: q.query_text(),
                        document: doc.to_string(),
                    })?;
                }
                Ok(out)
            }
            ScorerKind::Bm25 => {
                let stats = self.corpus.as_ref().ok_or_else(|| self.missing("BM25 corpus"))?;
                let query = q.rendered();
                let mut out = [0.0; 3];
                for (o, doc) in out.iter_mut().zip(d) {
                    *o = bm25_score(&query, doc, stats, self.bm25)?;
                }
                Ok(out)
            }
            ScorerKind::Cosine => {
                let e = self.embedder.ok_or_else(|| self.missing("embedder"))?;
                let docs_emb = self.doc_embeddings.as_ref().ok_or_else(|| self.missing("document embedding"))?;
                let qv = e.embed(&q.rendered())?;
                let mut out = [0.0; 3];
                for (o, dv) in out.iter_mut().zip(docs_emb) {
                    *o = cosine(&qv.values, dv)?;
                }
                Ok(out)
            }
            ScorerKind::LlmRank => {
                let llm = self.llm.ok_or_else(|| self.missing("LLM"))?;
                Ok(std::array::from_fn(|j| self.llm_rank(llm, q, d[j])))
            }
            ScorerKind::LlmScores => llm_scores
                .copied()
                .ok_or_else(|| Error::Invalid("llm-scores ranking requires LLM stance scores for every rationale".into())),
        }
    }

    /// Raw triple stored in the relevance profile: the scorer output, except
    /// for LLM scores which are log-transformed (see [`llm_scores_to_raw`]).
    pub fn profile_raw(&self, q: &RankingQuery, docs: &StanceDocuments, llm_scores: Option<&[f64; 3]>) -> Result<[f64; 3]> {
        let raw = self.score_rationale(q, docs, llm_scores)?;
        Ok(if self.kind == ScorerKind::LlmScores { llm_scores_to_raw(&raw) } else { raw })
    }
}

fn parse_leading_number(s: &str) -> Option<f64> {
    let start = s.find(|c: char| c.is_ascii_digit() || c == '-' || c == '.')?;
    let rest = &s[start..];
    let end = rest.find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-')).unwrap_or(rest.len());
    rest[..end].parse().ok().filter(|v: &f64| v.is_finite())
}
