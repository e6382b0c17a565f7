//! Deterministic offline providers for tests, fixtures and dry runs.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Embedder, EmbeddingVector, LlmProvider, LlmRequest, RerankRequest, Reranker};
use crate::error::{Error, Result};
use crate::text::tokenize;

/// Canned responses keyed by the user prompt.
#[derive(Debug, Clone, Default)]
pub struct TableLlm {
    table: HashMap<String, String>,
    fallback: Option<String>,
}

impl TableLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, user_prompt: impl Into<String>, response: impl Into<String>) -> Self {
        self.table.insert(user_prompt.into(), response.into());
        self
    }

    pub fn with_fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }
}

impl LlmProvider for TableLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String> {
        self.table
            .get(&req.user_prompt)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| Error::Invalid("mock LLM has no canned response for this prompt".into()))
    }
}

/// Cue-word LLM stand-in. Reads the post from the `Text:` line of the user
/// prompt. Requests whose system prompt mentions "implicit" get one
/// rationale line per clause; all others get a linguistic assessment
/// phrased from the cue counts.
#[derive(Debug, Clone)]
pub struct RuleBasedLlm {
    cues: [HashSet<String>; 3],
}

impl Default for RuleBasedLlm {
    fn default() -> Self {
        let set = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect::<HashSet<_>>();
        RuleBasedLlm {
            cues: [
                set(&[
                    "support", "great", "welcome", "benefit", "love", "good", "praise", "agree", "applaud", "helpful",
                ]),
                set(&["oppose", "terrible", "reject", "harm", "hate", "bad", "ban", "stupid", "awful", "dangerous"]),
                set(&[
                    "report", "mention", "schedule", "describe", "note", "meeting", "announce", "agenda", "memo", "summary",
                ]),
            ],
        }
    }
}

impl RuleBasedLlm {
    pub fn with_cues(favor: &[&str], against: &[&str], neutral: &[&str]) -> Self {
        let set = |ws: &[&str]| ws.iter().map(|w| w.to_lowercase()).collect::<HashSet<_>>();
        RuleBasedLlm {
            cues: [set(favor), set(against), set(neutral)],
        }
    }

    fn counts(&self, s: &str) -> [usize; 3] {
        let mut c = [0usize; 3];
        for t in tokenize(s) {
            for (j, cue) in self.cues.iter().enumerate() {
                if cue.contains(&t) {
                    c[j] += 1;
                }
            }
        }
        c
    }

    fn post_text(user_prompt: &str) -> &str {
        let Some(start) = user_prompt.find("Text:") else {
            return user_prompt;
        };
        let rest = &user_prompt[start + "Text:".len()..];
        let end = rest.find("\nTarget:").unwrap_or(rest.len());
        rest[..end].trim()
    }

    fn implicit(&self, text: &str) -> String {
        let labels = ["favor", "against", "neutral"];
        let mut lines = Vec::new();
        for clause in text.split(['.', ';', '!', '?', '\n']) {
            let clause = clause.trim();
            if clause.is_empty() {
                continue;
            }
            let c = self.counts(clause);
            let best = (0..3).fold(2, |b, j| if c[j] > c[b] { j } else { b });
            let smoothed: Vec<f64> = c.iter().map(|&x| x as f64 + 0.1).collect();
            let total: f64 = smoothed.iter().sum();
            lines.push(format!(
                "{} | {:.4},{:.4},{:.4} | {}",
                labels[best],
                smoothed[0] / total,
                smoothed[1] / total,
                smoothed[2] / total,
                clause
            ));
        }
        if lines.is_empty() {
            "NONE".to_string()
        } else {
            lines.join("\n")
        }
    }

    fn explicit(&self, text: &str) -> String {
        let c = self.counts(text);
        let empathy = if c[0] > c[1] {
            "high empathy, as it speaks warmly about the subject"
        } else if c[1] > c[0] {
            "low empathy, as it attacks the subject"
        } else {
            "moderate empathy"
        };
        let absolutism = if c[1] > 0 {
            "The tone is confrontational, indicating absolutist thinking."
        } else {
            "There is no absolutist language."
        };
        let concreteness = if c[2] > 0 {
            "The language is descriptive and concrete, reporting events without judgement."
        } else {
            "The language is evaluative rather than descriptive."
        };
        let communion = if c[0] > 0 {
            "Communion language signals approach and agreement."
        } else {
            "There is little communion language."
        };
        format!("The post exhibits {empathy}. {absolutism} {concreteness} {communion} There is no apparent allure.")
    }
}

impl LlmProvider for RuleBasedLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String> {
        let text = Self::post_text(&req.user_prompt);
        if req.system_prompt.to_lowercase().contains("implicit") {
            Ok(self.implicit(text))
        } else {
            Ok(self.explicit(text))
        }
    }
}

/// Bag-of-tokens embedder: every token maps to a pseudorandom vector
/// seeded from a hash of (model id, token); the weighted sum is scaled to
/// unit norm.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    model_id: String,
    dim: usize,
    weights: HashMap<String, f64>,
}

impl HashEmbedder {
    pub fn new(model_id: impl Into<String>, dim: usize) -> Self {
        HashEmbedder {
            model_id: model_id.into(),
            dim,
            weights: HashMap::new(),
        }
    }

    /// Per-token multipliers (default 1.0).
    pub fn with_token_weights<I, S>(mut self, weights: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        self.weights.extend(weights.into_iter().map(|(k, v)| (k.into().to_lowercase(), v)));
        self
    }

    fn token_vector(&self, token: &str, out: &mut [f64], weight: f64) {
        let mut h = Sha256::new();
        h.update(self.model_id.as_bytes());
        h.update([0u8]);
        h.update(token.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        for v in out.iter_mut() {
            *v += weight * rng.gen_range(-1.0..1.0);
        }
    }
}

impl Embedder for HashEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.is_empty() {
            return Err(Error::Invalid("cannot embed empty text".into()));
        }
        let mut values = vec![0.0; self.dim];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            self.token_vector(text, &mut values, 1.0);
        }
        for t in &tokens {
            let w = self.weights.get(t).copied().unwrap_or(1.0);
            self.token_vector(t, &mut values, w);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Invalid(format!("degenerate mock embedding for `{text}`")));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(EmbeddingVector {
            values,
            model_id: self.model_id.clone(),
        })
    }
}

/// Scores a query by how many of its tokens (with repetition) occur in the
/// document. The instruction is ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenOverlapReranker;

impl Reranker for TokenOverlapReranker {
    fn score(&self, req: &RerankRequest) -> Result<f64> {
        let doc: HashSet<String> = tokenize(&req.document).into_iter().collect();
        Ok(tokenize(&req.query).iter().filter(|t| doc.contains(*t)).count() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_llm_returns_canned_response() {
        let llm = TableLlm::new().with("u", "hello");
        assert_eq!(llm.complete(&LlmRequest::new("m", "s", "u")).unwrap(), "hello");
        assert!(llm.complete(&LlmRequest::new("m", "s", "other")).is_err());
    }

    #[test]
    fn hash_embedder_unit_norm_and_deterministic() {
        let e = HashEmbedder::new("mock", 64);
        let a = e.embed("the quick brown fox").unwrap();
        let b = e.embed("the quick brown fox").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 64);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert_ne!(a, e.embed("another sentence").unwrap());
        assert!((e.embed("?!").unwrap().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn token_weights_bias_the_embedding() {
        let plain = HashEmbedder::new("mock", 64);
        let biased = HashEmbedder::new("mock", 64).with_token_weights([("support", 5.0)]);
        let cue = plain.embed("support").unwrap();
        let cos = |a: &EmbeddingVector, b: &EmbeddingVector| a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>();
        let text = "we support the plan for the town";
        assert!(cos(&biased.embed(text).unwrap(), &cue) > cos(&plain.embed(text).unwrap(), &cue));
    }

    #[test]
    fn overlap_reranker_counts_query_tokens() {
        let r = TokenOverlapReranker;
        let req = |q: &str, d: &str| RerankRequest {
            instruction: "ignored words".into(),
            query: q.into(),
            document: d.into(),
        };
        assert_eq!(r.score(&req("alpha beta", "gamma delta")).unwrap(), 0.0);
        // query is a subset of the document: score = 3 query tokens
        assert_eq!(r.score(&req("solar power now", "we need solar power now and later")).unwrap(), 3.0);
        assert_eq!(r.score(&req("power power", "power")).unwrap(), 2.0);
    }

    #[test]
    fn rule_based_llm_splits_clauses() {
        let llm = RuleBasedLlm::default();
        let req = LlmRequest::new(
            "m",
            "Extract implicit rationales",
            "Text: We support this. The memo was filed; They hate it\nTarget: plan",
        );
        let out = llm.complete(&req).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("favor |"));
        assert!(lines[1].starts_with("neutral |"));
        assert!(lines[2].starts_with("against |") && lines[2].ends_with("They hate it"));

        let explicit = llm
            .complete(&LlmRequest::new("m", "Assess linguistic measures", "Text: They hate it\nTarget: plan"))
            .unwrap();
        assert!(explicit.contains("low empathy") && explicit.contains("absolutist thinking"));
        let none = llm.complete(&LlmRequest::new("m", "implicit", "Text: ...\nTarget: x")).unwrap();
        assert_eq!(none, "NONE");
    }
}
