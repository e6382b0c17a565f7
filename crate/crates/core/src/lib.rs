//! Interpretable zero-shot stance detection.
//!
//! The pipeline extracts implicit rationales (spans of the post) and an
//! explicit linguistic assessment with an LLM, scores each implicit
//! rationale against favor/against/neutral reference documents, keeps a
//! diverse set of relevant and irrelevant rationales, and classifies the
//! stance with a small trainable head and a majority vote.

#![allow(clippy::needless_range_loop)]

pub mod artifact;
pub mod classifier;
pub mod config;
pub mod docprep;
pub mod error;
pub mod evalkit;
pub mod fixture;
pub mod model;
pub mod pipeline;
pub mod providers;
pub mod ranking;
pub mod rationale;
pub mod selection;
pub mod text;

pub use error::{Error, ErrorPolicy, Result};
pub use model::{Dataset, ExplicitRationale, ImplicitRationale, Sample, Split, StanceLabel};
