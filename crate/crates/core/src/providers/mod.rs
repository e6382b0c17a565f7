//! Clients for the three external capabilities the pipeline depends on:
//! chat completion, sentence embedding and pairwise reranking.
//!
//! Each capability is a trait with a deterministic mock and an HTTP client.
//! [`CachedLlm`], [`CachedEmbedder`] and [`CachedReranker`] wrap any
//! implementation with the content-addressed [`DiskCache`]; a warm cache
//! replays a run without touching the wrapped provider.

mod bm25;
mod cache;
mod http;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bm25::{bm25_score, Bm25Params, CorpusStats};
pub use cache::{CacheKey, DiskCache};
pub use http::{HttpEmbedder, HttpLlm, HttpReranker, Limiter, NetConfig};
pub use mock::{HashEmbedder, RuleBasedLlm, TableLlm, TokenOverlapReranker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model_id: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl LlmRequest {
    pub fn new(model_id: impl Into<String>, system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        LlmRequest {
            model_id: model_id.into(),
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: 0.0,
            max_tokens: 1024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(Error::Invalid("LLM prompts must be non-empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Invalid(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(Error::Invalid("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankRequest {
    pub instruction: String,
    pub query: String,
    pub document: String,
}

impl RerankRequest {
    pub fn validate(&self) -> Result<()> {
        if self.query.trim().is_empty() || self.document.trim().is_empty() {
            return Err(Error::Invalid("rerank query and document must be non-empty".into()));
        }
        Ok(())
    }

    /// Query text as sent to a remote reranker: instruction, then query.
    pub fn rendered_query(&self) -> String {
        if self.instruction.is_empty() {
            self.query.clone()
        } else {
            format!("{} {}", self.instruction, self.query)
        }
    }
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, req: &LlmRequest) -> Result<String>;
}

pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
}

pub trait Reranker: Send + Sync {
    fn score(&self, req: &RerankRequest) -> Result<f64>;
}

/// Counts of calls that reached the wrapped provider (cache misses) and
/// calls served from the cache.
#[derive(Debug, Default)]
pub struct ProviderStats {
    pub llm_calls: AtomicUsize,
    pub embed_calls: AtomicUsize,
    pub rerank_calls: AtomicUsize,
    pub cache_hits: AtomicUsize,
}

impl ProviderStats {
    pub fn provider_calls(&self) -> usize {
        self.llm_calls.load(Ordering::Relaxed) + self.embed_calls.load(Ordering::Relaxed) + self.rerank_calls.load(Ordering::Relaxed)
    }

    pub fn hits(&self) -> usize {
        self.cache_hits.load(Ordering::Relaxed)
    }
}

pub struct CachedLlm {
    inner: Box<dyn LlmProvider>,
    cache: Option<Arc<DiskCache>>,
    stats: Arc<ProviderStats>,
}

impl CachedLlm {
    pub fn new(inner: Box<dyn LlmProvider>, cache: Option<Arc<DiskCache>>, stats: Arc<ProviderStats>) -> Self {
        CachedLlm { inner, cache, stats }
    }
}

impl LlmProvider for CachedLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String> {
        req.validate()?;
        let key = CacheKey::of("llm", req)?;
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get::<String>(&key)? {
                self.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit);
            }
        }
        self.stats.llm_calls.fetch_add(1, Ordering::Relaxed);
        let out = self.inner.complete(req)?;
        if out.trim().is_empty() {
            return Err(Error::EmptyCompletion { digest: key.hex() });
        }
        if let Some(cache) = &self.cache {
            cache.put(&key, req, &out)?;
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct EmbedKeyRequest<'a> {
    model_id: &'a str,
    text: &'a str,
}

pub struct CachedEmbedder {
    inner: Box<dyn Embedder>,
    dim: usize,
    cache: Option<Arc<DiskCache>>,
    stats: Arc<ProviderStats>,
}

impl CachedEmbedder {
    /// `dim` is the configured embedding dimension; vectors of any other
    /// length are rejected.
    pub fn new(inner: Box<dyn Embedder>, dim: usize, cache: Option<Arc<DiskCache>>, stats: Arc<ProviderStats>) -> Self {
        CachedEmbedder { inner, dim, cache, stats }
    }
}

impl Embedder for CachedEmbedder {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::Invalid("cannot embed empty text".into()));
        }
        let req = EmbedKeyRequest {
            model_id: self.inner.model_id(),
            text,
        };
        let key = CacheKey::of("embed", &req)?;
        if let Some(cache) = &self.cache {
            if let Some(values) = cache.get::<Vec<f64>>(&key)? {
                if values.len() == self.dim {
                    self.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(EmbeddingVector {
                        values,
                        model_id: self.inner.model_id().to_string(),
                    });
                }
            }
        }
        self.stats.embed_calls.fetch_add(1, Ordering::Relaxed);
        let v = self.inner.embed(text)?;
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.dim(),
            });
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid(format!("embedding for request {} has non-finite entries", key.hex())));
        }
        if let Some(cache) = &self.cache {
            cache.put(&key, &req, &v.values)?;
        }
        Ok(v)
    }
}

pub struct CachedReranker {
    inner: Box<dyn Reranker>,
    model_id: String,
    cache: Option<Arc<DiskCache>>,
    stats: Arc<ProviderStats>,
}

#[derive(Serialize)]
struct RerankKeyRequest<'a> {
    model_id: &'a str,
    #[serde(flatten)]
    req: &'a RerankRequest,
}

impl CachedReranker {
    pub fn new(inner: Box<dyn Reranker>, model_id: impl Into<String>, cache: Option<Arc<DiskCache>>, stats: Arc<ProviderStats>) -> Self {
        CachedReranker {
            inner,
            model_id: model_id.into(),
            cache,
            stats,
        }
    }
}

impl Reranker for CachedReranker {
    fn score(&self, req: &RerankRequest) -> Result<f64> {
        req.validate()?;
        let keyed = RerankKeyRequest { model_id: &self.model_id, req };
        let key = CacheKey::of("rerank", &keyed)?;
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get::<f64>(&key)? {
                self.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit);
            }
        }
        self.stats.rerank_calls.fetch_add(1, Ordering::Relaxed);
        let score = self.inner.score(req)?;
        if !score.is_finite() {
            return Err(Error::Invalid(format!("reranker returned non-finite score for request {}", key.hex())));
        }
        if let Some(cache) = &self.cache {
            cache.put(&key, &keyed, &score)?;
        }
        Ok(score)
    }
}

/// Cosine similarity of two embeddings, clamped to [-1, 1].
pub fn cosine_score(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine(&a.values, &b.values)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Invalid("cosine similarity of a zero vector".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(values: Vec<f64>) -> EmbeddingVector {
        EmbeddingVector { values, model_id: "t".into() }
    }

    #[test]
    fn cosine_examples() {
        let a = ev(vec![0.3, -1.2, 2.0]);
        assert!((cosine_score(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_score(&ev(vec![1.0, 0.0]), &ev(vec![0.0, 2.0])).unwrap(), 0.0);
        let c = cosine_score(&ev(vec![1.0, 1.0, 0.0]), &ev(vec![1.0, 0.0, 0.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_zero_and_mismatch() {
        assert!(cosine_score(&ev(vec![0.0, 0.0]), &ev(vec![1.0, 0.0])).is_err());
        assert!(cosine_score(&ev(vec![1.0]), &ev(vec![1.0, 0.0])).is_err());
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 5),
            b in prop::collection::vec(-10.0f64..10.0, 5),
            alpha in 0.01f64..100.0,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let (va, vb) = (ev(a.clone()), ev(b));
            let ab = cosine_score(&va, &vb).unwrap();
            let ba = cosine_score(&vb, &va).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            let scaled = ev(a.iter().map(|x| x * alpha).collect());
            prop_assert!((cosine_score(&scaled, &vb).unwrap() - ab).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn llm_request_validation() {
        assert!(LlmRequest::new("m", "sys", "user").validate().is_ok());
        assert!(LlmRequest::new("m", "", "user").validate().is_err());
        let mut hot = LlmRequest::new("m", "s", "u");
        hot.temperature = -0.5;
        assert!(hot.validate().is_err());
    }

    struct Counting(AtomicUsize, &'static str);

    impl LlmProvider for Counting {
        fn complete(&self, _req: &LlmRequest) -> Result<String> {
            self.0.fetch_add(1, Ordering::Relaxed);
            Ok(self.1.to_string())
        }
    }

    #[test]
    fn llm_cache_serves_second_call() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(DiskCache::new(dir.path()).unwrap());
        let stats = Arc::new(ProviderStats::default());
        let llm = CachedLlm::new(Box::new(Counting(AtomicUsize::new(0), "canned")), Some(cache.clone()), stats.clone());
        let req = LlmRequest::new("m", "sys", "user");
        let a = llm.complete(&req).unwrap();
        let b = llm.complete(&req).unwrap();
        assert_eq!(a, b);
        assert_eq!(stats.llm_calls.load(Ordering::Relaxed), 1);
        assert_eq!(stats.hits(), 1);

        // A fresh wrapper over the same directory replays without calling out.
        let stats2 = Arc::new(ProviderStats::default());
        let llm2 = CachedLlm::new(Box::new(Counting(AtomicUsize::new(0), "other")), Some(cache), stats2.clone());
        assert_eq!(llm2.complete(&req).unwrap(), "canned");
        assert_eq!(stats2.provider_calls(), 0);
    }

    #[test]
    fn empty_completion_is_an_error() {
        let stats = Arc::new(ProviderStats::default());
        let llm = CachedLlm::new(Box::new(Counting(AtomicUsize::new(0), "  ")), None, stats);
        assert!(matches!(llm.complete(&LlmRequest::new("m", "s", "u")), Err(Error::EmptyCompletion { .. })));
    }

    #[test]
    fn embedder_dimension_is_enforced() {
        let stats = Arc::new(ProviderStats::default());
        let e = CachedEmbedder::new(Box::new(HashEmbedder::new("h", 16)), 32, None, stats);
        assert!(matches!(e.embed("x"), Err(Error::DimensionMismatch { expected: 32, actual: 16 })));
    }

    #[test]
    fn cached_embeddings_are_bitwise_stable() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(DiskCache::new(dir.path()).unwrap());
        let stats = Arc::new(ProviderStats::default());
        let e = CachedEmbedder::new(Box::new(HashEmbedder::new("h", 64)), 64, Some(cache), stats.clone());
        let a = e.embed("x").unwrap();
        let b = e.embed("x").unwrap();
        assert_eq!(
            a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(stats.embed_calls.load(Ordering::Relaxed), 1);
    }

    #[test]
    fn reranker_cache_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(DiskCache::new(dir.path()).unwrap());
        let stats = Arc::new(ProviderStats::default());
        let r = CachedReranker::new(Box::new(TokenOverlapReranker), "overlap", Some(cache), stats.clone());
        let req = RerankRequest {
            instruction: "align with the target".into(),
            query: "solar power".into(),
            document: "solar panels and wind power".into(),
        };
        assert_eq!(r.score(&req).unwrap(), r.score(&req).unwrap());
        assert_eq!(stats.rerank_calls.load(Ordering::Relaxed), 1);
    }
}
