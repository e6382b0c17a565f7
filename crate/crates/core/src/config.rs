//! Run configuration and provider construction.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classifier::TrainConfig;
use crate::docprep::DocPrepConfig;
use crate::error::{Error, ErrorPolicy, Result};
use crate::evalkit::SweepParam;
use crate::model::{adapt_ez, adapt_vast, load_canonical, Dataset, EzLayout, Split, VastLayout};
use crate::providers::{
    Bm25Params, CachedEmbedder, CachedLlm, CachedReranker, DiskCache, HashEmbedder, HttpEmbedder, HttpLlm, HttpReranker, Limiter, NetConfig, ProviderStats,
    RuleBasedLlm, TokenOverlapReranker,
};
use crate::ranking::{QueryOptions, ScorerKind};
use crate::rationale::{LlmSettings, PromptTemplate};
use crate::selection::SelectConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Canonical,
    Vast,
    Ez,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub format: DataFormat,
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub test: PathBuf,
    /// Labeled statements the stance documents are drawn from.
    pub source: PathBuf,
    pub source_format: Option<DataFormat>,
    pub vast: VastLayout,
    pub ez: EzLayout,
}

impl DataConfig {
    fn load_with(&self, path: &Path, split: Split, format: DataFormat) -> Result<Dataset> {
        match format {
            DataFormat::Canonical => load_canonical(path, split),
            DataFormat::Vast => adapt_vast(path, split, &self.vast),
            DataFormat::Ez => adapt_ez(path, split, &self.ez),
        }
    }

    pub fn load(&self, split: Split) -> Result<Option<Dataset>> {
        let path = match split {
            Split::Train => Some(&self.train),
            Split::Dev => self.dev.as_ref(),
            Split::Test => Some(&self.test),
        };
        path.map(|p| self.load_with(p, split, self.format)).transpose()
    }

    pub fn load_source(&self) -> Result<Dataset> {
        self.load_with(&self.source, Split::Train, self.source_format.unwrap_or(self.format))
    }

    /// Files whose contents feed the pipeline, in a fixed order.
    pub fn files(&self) -> Vec<&Path> {
        let mut v = vec![self.source.as_path(), self.train.as_path()];
        v.extend(self.dev.as_deref());
        v.push(&self.test);
        v
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    /// Environment variable holding the API key.
    pub api_key_env: Option<String>,
    #[serde(flatten)]
    pub settings: LlmSettings,
    pub implicit_template: Option<PathBuf>,
    pub explicit_template: Option<PathBuf>,
}

impl LlmConfig {
    pub fn templates(&self) -> Result<(PromptTemplate, PromptTemplate)> {
        let imp = match &self.implicit_template {
            Some(p) => PromptTemplate::load(p)?,
            None => PromptTemplate::default_implicit(),
        };
        let exp = match &self.explicit_template {
            Some(p) => PromptTemplate::load(p)?,
            None => PromptTemplate::default_explicit(),
        };
        Ok((imp, exp))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub model: String,
    pub dim: usize,
    /// Mock only: per-token weights.
    pub token_weights: BTreeMap<String, f64>,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            kind: ProviderKind::Mock,
            endpoint: None,
            api_key_env: None,
            model: "hash".into(),
            dim: 64,
            token_weights: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub model: String,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            kind: ProviderKind::Mock,
            endpoint: None,
            api_key_env: None,
            model: "token-overlap".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankConfig {
    pub scorer: ScorerKind,
    #[serde(flatten)]
    pub query: QueryOptions,
    /// Instruction file; the bundled instruction when absent.
    pub instruction: Option<PathBuf>,
    pub calibration_trainable: bool,
    pub bm25: Bm25Params,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            scorer: ScorerKind::Reranker,
            query: QueryOptions::default(),
            instruction: None,
            calibration_trainable: true,
            bm25: Bm25Params::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            parameter: SweepParam::K,
            values: vec![1.0, 2.0, 3.0, 4.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_dir: PathBuf,
    /// Provider response cache shared by all seeds; `<run_dir>/cache` when absent.
    pub cache_dir: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub error_policy: ErrorPolicy,
    /// Worker threads for per-sample work; 0 uses every core.
    pub workers: usize,
    pub data: DataConfig,
    pub llm: LlmConfig,
    pub embed: EmbedConfig,
    pub rerank: RerankConfig,
    pub net: NetConfig,
    pub docprep: DocPrepConfig,
    pub rank: RankConfig,
    pub select: SelectConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_dir: PathBuf::from("runs/default"),
            cache_dir: None,
            seeds: vec![0],
            train_fraction: 1.0,
            error_policy: ErrorPolicy::Strict,
            workers: 0,
            data: DataConfig::default(),
            llm: LlmConfig::default(),
            embed: EmbedConfig::default(),
            rerank: RerankConfig::default(),
            net: NetConfig::default(),
            docprep: DocPrepConfig::default(),
            rank: RankConfig::default(),
            select: SelectConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() && !p.as_os_str().is_empty() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parses a TOML file; relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.run_dir);
        for p in [&mut self.data.train, &mut self.data.test, &mut self.data.source] {
            resolve(base, p);
        }
        for p in [
            self.data.dev.as_mut(),
            self.cache_dir.as_mut(),
            self.llm.implicit_template.as_mut(),
            self.llm.explicit_template.as_mut(),
            self.rank.instruction.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.run_dir.join("cache"))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!("train_fraction = {} must be in (0, 1]", self.train_fraction));
        }
        for (name, p) in [
            ("data.train", &self.data.train),
            ("data.test", &self.data.test),
            ("data.source", &self.data.source),
        ] {
            if p.as_os_str().is_empty() {
                return bad(format!("{name} is not set"));
            }
        }
        if !(self.docprep.threshold.is_finite()) || self.docprep.max_per_bucket == 0 {
            return bad("docprep.threshold must be finite and docprep.max_per_bucket positive".into());
        }
        if !(0.0..=1.0).contains(&self.select.threshold) {
            return bad(format!("select.threshold = {} must be in [0, 1]", self.select.threshold));
        }
        if self.select.k == 0 {
            return bad("select.k must be at least 1".into());
        }
        if self.select.epsilon.is_nan() || self.select.epsilon <= 0.0 {
            return bad("select.epsilon must be positive".into());
        }
        if self.embed.dim == 0 {
            return bad("embed.dim must be positive".into());
        }
        for (name, kind, endpoint) in [
            ("llm", self.llm.kind, &self.llm.endpoint),
            ("embed", self.embed.kind, &self.embed.endpoint),
            ("rerank", self.rerank.kind, &self.rerank.endpoint),
        ] {
            if kind == ProviderKind::Http && endpoint.is_none() {
                return bad(format!("{name}.endpoint is required for http providers"));
            }
        }
        if self.sweep.values.is_empty() {
            return bad("sweep.values must not be empty".into());
        }
        self.train.validate()
    }
}

fn api_key(var: &Option<String>) -> Result<Option<String>> {
    match var {
        None => Ok(None),
        Some(v) => std::env::var(v)
            .map(Some)
            .map_err(|_| Error::Config(format!("environment variable {v} is not set"))),
    }
}

/// Cached providers built from a run configuration.
pub struct Providers {
    pub llm: CachedLlm,
    pub embedder: CachedEmbedder,
    pub reranker: CachedReranker,
    pub stats: Arc<ProviderStats>,
}

impl Providers {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let cache = Some(Arc::new(DiskCache::new(cfg.cache_dir())?));
        let stats = Arc::new(ProviderStats::default());
        let limiter = Limiter::new(cfg.net.max_concurrency);
        let llm: Box<dyn crate::providers::LlmProvider> = match cfg.llm.kind {
            ProviderKind::Mock => Box::new(RuleBasedLlm::default()),
            ProviderKind::Http => Box::new(HttpLlm::new(
                cfg.llm.endpoint.as_deref().unwrap_or_default(),
                api_key(&cfg.llm.api_key_env)?,
                &cfg.net,
                limiter.clone(),
            )?),
        };
        let e = &cfg.embed;
        let embedder: Box<dyn crate::providers::Embedder> = match e.kind {
            ProviderKind::Mock => Box::new(HashEmbedder::new(e.model.clone(), e.dim).with_token_weights(e.token_weights.clone())),
            ProviderKind::Http => Box::new(HttpEmbedder::new(
                e.endpoint.as_deref().unwrap_or_default(),
                &e.model,
                e.dim,
                api_key(&e.api_key_env)?,
                &cfg.net,
                limiter.clone(),
            )?),
        };
        let r = &cfg.rerank;
        let reranker: Box<dyn crate::providers::Reranker> = match r.kind {
            ProviderKind::Mock => Box::new(TokenOverlapReranker),
            ProviderKind::Http => Box::new(HttpReranker::new(
                r.endpoint.as_deref().unwrap_or_default(),
                &r.model,
                api_key(&r.api_key_env)?,
                &cfg.net,
                limiter,
            )?),
        };
        Ok(Providers {
            llm: CachedLlm::new(llm, cache.clone(), stats.clone()),
            embedder: CachedEmbedder::new(embedder, e.dim, cache.clone(), stats.clone()),
            reranker: CachedReranker::new(reranker, r.model.clone(), cache, stats.clone()),
            stats,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.data.train = "a".into();
        cfg.data.test = "b".into();
        cfg.data.source = "c".into();
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn partial_file_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "run_dir = \"out\"\nseeds = [1, 2]\n[data]\ntrain = \"train.jsonl\"\ntest = \"test.jsonl\"\nsource = \"src.jsonl\"\n[select]\nk = 2\n[train]\nvote_mode = \"all-plus-explicit\"\n[rank]\nscorer = \"bm25\"\nuse_target = false\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.run_dir, dir.path().join("out"));
        assert_eq!(cfg.data.train, dir.path().join("train.jsonl"));
        assert_eq!(cfg.select.k, 2);
        assert_eq!(cfg.select.threshold, 0.3);
        assert_eq!(cfg.rank.scorer, ScorerKind::Bm25);
        assert!(!cfg.rank.query.use_target);
        assert_eq!(cfg.train.vote_mode, crate::classifier::VoteMode::AllPlusExplicit);
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_failures() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_err());
        cfg.data.train = "a".into();
        cfg.data.test = "b".into();
        cfg.data.source = "c".into();
        cfg.train_fraction = 0.0;
        assert!(cfg.validate().is_err());
        cfg.train_fraction = 0.3;
        cfg.llm.kind = ProviderKind::Http;
        assert!(cfg.validate().unwrap_err().to_string().contains("llm.endpoint"));
        cfg.llm.kind = ProviderKind::Mock;
        cfg.train.beta = 1.5;
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<RunConfig>("bogus_key = 1").is_err());
    }
}
