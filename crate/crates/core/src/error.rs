use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("unknown stance label `{0}`")]
    UnknownLabel(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("provider transport failure for request {digest}: {message}")]
    Transport { digest: String, message: String },

    #[error("provider returned an empty completion for request {digest}")]
    EmptyCompletion { digest: String },

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unparseable LLM response: {message}\n--- raw response ---\n{raw}")]
    UnparseableResponse { message: String, raw: String },

    #[error("stance bucket `{bucket}` is empty after similarity filtering; raise docprep.threshold or supply a larger source dataset")]
    EmptyBucket { bucket: String },

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(&'static str),

    #[error("missing {stage} output for sample `{sample}`")]
    MissingStageData { stage: String, sample: String },

    #[error("stage `{stage}` requires `{dependency}` to run first")]
    MissingDependency { stage: String, dependency: String },

    #[error("stage `{stage}`: artifacts of `{dependency}` are stale ({detail}); rerun `{dependency}`")]
    StaleArtifact { stage: String, dependency: String, detail: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

/// What a stage does when a provider call or response parse fails for one
/// sample: abort the run, or record an empty result and continue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorPolicy {
    #[default]
    Strict,
    Degrade,
}
