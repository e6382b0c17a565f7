//! JSON-over-HTTP clients.
//!
//! Wire shapes:
//! - chat: `POST {endpoint}` with `{model, messages:[{role, content}], temperature, max_tokens}`,
//!   reply `{choices:[{message:{content}}]}`
//! - embeddings: `{model, input:[text]}` → `{data:[{embedding:[..]}]}`
//! - rerank: `{model, query, documents:[doc]}` → `{scores:[s]}` (a
//!   `{results:[{index, relevance_score}]}` reply is accepted as well)

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CacheKey, Embedder, EmbeddingVector, LlmProvider, LlmRequest, RerankRequest, Reranker};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub max_concurrency: usize,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            max_concurrency: 8,
            retries: 3,
            backoff_ms: 500,
            timeout_secs: 120,
        }
    }
}

/// Counting semaphore bounding in-flight requests across all clients that
/// share it.
#[derive(Debug)]
pub struct Limiter {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    pub fn new(max: usize) -> Arc<Self> {
        Arc::new(Limiter {
            slots: Mutex::new(max.max(1)),
            freed: Condvar::new(),
        })
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.slots.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.freed.notify_one();
    }
}

struct Transport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    net: NetConfig,
    limiter: Arc<Limiter>,
}

impl Transport {
    fn new(endpoint: &str, api_key: Option<String>, net: &NetConfig, limiter: Arc<Limiter>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(net.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("building HTTP client: {e}")))?;
        Ok(Transport {
            client,
            endpoint: endpoint.to_string(),
            api_key,
            net: net.clone(),
            limiter,
        })
    }

    /// POSTs `body`, retrying connection failures, 429 and 5xx replies.
    fn post(&self, body: &Value, digest: &CacheKey) -> Result<Value> {
        let attempts = self.net.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 && self.net.backoff_ms > 0 {
                let wait = self.net.backoff_ms.saturating_mul(1 << (attempt - 1).min(6));
                std::thread::sleep(Duration::from_millis(wait));
            }
            let _slot = self.limiter.acquire();
            let mut req = self.client.post(&self.endpoint).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp.json::<Value>().map_err(|e| Error::Transport {
                            digest: digest.hex(),
                            message: format!("decoding response body: {e}"),
                        });
                    }
                    last = format!("HTTP {status}");
                    if !(status.is_server_error() || status.as_u16() == 429) {
                        break;
                    }
                }
                Err(e) => last = e.to_string(),
            }
            log::debug!("request {} attempt {} failed: {last}", digest.hex(), attempt + 1);
        }
        Err(Error::Transport {
            digest: digest.hex(),
            message: format!("{last} after {attempts} attempt(s)"),
        })
    }
}

fn malformed(digest: &CacheKey, what: &str) -> Error {
    Error::Transport {
        digest: digest.hex(),
        message: format!("malformed response: {what}"),
    }
}

pub struct HttpLlm {
    transport: Transport,
}

impl HttpLlm {
    pub fn new(endpoint: &str, api_key: Option<String>, net: &NetConfig, limiter: Arc<Limiter>) -> Result<Self> {
        Ok(HttpLlm {
            transport: Transport::new(endpoint, api_key, net, limiter)?,
        })
    }
}

impl LlmProvider for HttpLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String> {
        let digest = CacheKey::of("llm", req)?;
        let body = json!({
            "model": req.model_id,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let v = self.transport.post(&body, &digest)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| malformed(&digest, "missing choices[0].message.content"))
    }
}

pub struct HttpEmbedder {
    transport: Transport,
    model_id: String,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, model_id: &str, dim: usize, api_key: Option<String>, net: &NetConfig, limiter: Arc<Limiter>) -> Result<Self> {
        Ok(HttpEmbedder {
            transport: Transport::new(endpoint, api_key, net, limiter)?,
            model_id: model_id.to_string(),
            dim,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let digest = CacheKey::of("embed", &(self.model_id.as_str(), text))?;
        let v = self.transport.post(&json!({"model": self.model_id, "input": [text]}), &digest)?;
        let arr = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed(&digest, "missing data[0].embedding"))?;
        let values = arr
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| malformed(&digest, "non-numeric embedding entry")))
            .collect::<Result<Vec<f64>>>()?;
        Ok(EmbeddingVector {
            values,
            model_id: self.model_id.clone(),
        })
    }
}

pub struct HttpReranker {
    transport: Transport,
    model_id: String,
}

impl HttpReranker {
    pub fn new(endpoint: &str, model_id: &str, api_key: Option<String>, net: &NetConfig, limiter: Arc<Limiter>) -> Result<Self> {
        Ok(HttpReranker {
            transport: Transport::new(endpoint, api_key, net, limiter)?,
            model_id: model_id.to_string(),
        })
    }
}

impl Reranker for HttpReranker {
    fn score(&self, req: &RerankRequest) -> Result<f64> {
        let digest = CacheKey::of("rerank", req)?;
        let body = json!({
            "model": self.model_id,
            "query": req.rendered_query(),
            "documents": [req.document],
        });
        let v = self.transport.post(&body, &digest)?;
        if let Some(s) = v.pointer("/scores/0").and_then(Value::as_f64) {
            return Ok(s);
        }
        v.pointer("/results/0/relevance_score")
            .or_else(|| v.pointer("/results/0/score"))
            .and_then(Value::as_f64)
            .ok_or_else(|| malformed(&digest, "missing scores[0]"))
    }
}
