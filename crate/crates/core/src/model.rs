//! Domain types and dataset loading.
//!
//! Every dataset is normalized into the canonical line-delimited layout
//! (one JSON object per line with `id`, `text`, `target` and an optional
//! `stance`) before it enters the pipeline. The VAST and EZ-STANCE CSV
//! releases are converted by [`adapt_vast`] and [`adapt_ez`].

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stance of a text toward a target. The discriminant is the vector index
/// used for every per-stance triple in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceLabel {
    Favor = 0,
    Against = 1,
    Neutral = 2,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [StanceLabel::Favor, StanceLabel::Against, StanceLabel::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Favor => "favor",
            StanceLabel::Against => "against",
            StanceLabel::Neutral => "neutral",
        }
    }

    /// Index of the largest component; ties resolve to the earlier label.
    pub fn argmax(probs: &[f64; 3]) -> Self {
        let mut best = 0;
        for j in 1..3 {
            if probs[j] > probs[best] {
                best = j;
            }
        }
        Self::ALL[best]
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StanceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "favor" | "favour" => Ok(StanceLabel::Favor),
            "against" => Ok(StanceLabel::Against),
            "neutral" => Ok(StanceLabel::Neutral),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One (text, target, gold stance) record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub target: String,
    #[serde(rename = "stance", default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<StanceLabel>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, target: impl Into<String>, gold: Option<StanceLabel>) -> Result<Self> {
        let sample = Sample {
            id: id.into(),
            text: text.into(),
            target: target.into(),
            gold,
        };
        sample.validate()?;
        Ok(sample)
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Invalid("sample id is empty".into()));
        }
        if self.text.trim().is_empty() {
            return Err(Error::Invalid(format!("sample `{}` has empty text", self.id)));
        }
        if self.target.trim().is_empty() {
            return Err(Error::Invalid(format!("sample `{}` has empty target", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, split: Split, samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate sample id `{}`", s.id)));
            }
        }
        Ok(Dataset {
            name: name.into(),
            split,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A span of the sample text (or an LLM paraphrase of one) that evidences a stance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitRationale {
    pub rationale_id: String,
    pub text: String,
    pub source_sample: String,
    /// False when the span does not occur verbatim in the sample text.
    pub verbatim: bool,
    /// Stance the LLM attached to the span, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_label: Option<StanceLabel>,
    /// Unnormalized favor/against/neutral scores as printed by the LLM.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_scores: Option<[f64; 3]>,
}

/// Free-text linguistic assessment of the sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplicitRationale {
    pub text: String,
    pub source_sample: String,
}

#[derive(Deserialize)]
struct CanonicalRecord {
    id: String,
    text: String,
    target: String,
    #[serde(default)]
    stance: Option<String>,
}

/// Reads a canonical line-delimited dataset. Blank lines are skipped and
/// `\r\n` terminators are normalized; field contents are kept verbatim.
pub fn load_canonical(path: &Path, split: Split) -> Result<Dataset> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut samples = Vec::new();
    for (idx, line) in raw.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let rec: CanonicalRecord = serde_json::from_str(line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let gold = match rec.stance.as_deref() {
            None => None,
            Some(s) => Some(s.parse::<StanceLabel>().map_err(|e| parse_err(lineno, e.to_string()))?),
        };
        let sample = Sample::new(rec.id, rec.text, rec.target, gold).map_err(|e| parse_err(lineno, e.to_string()))?;
        samples.push(sample);
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(name, split, samples)
}

pub fn to_canonical_string(dataset: &Dataset) -> Result<String> {
    let mut out = String::new();
    for s in &dataset.samples {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_canonical(dataset: &Dataset, path: &Path) -> Result<()> {
    crate::artifact::write_atomic(path, to_canonical_string(dataset)?.as_bytes())
}

/// Column names and integer label codes of a VAST CSV release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VastLayout {
    pub text_column: String,
    pub target_column: String,
    pub label_column: String,
    pub favor_code: i64,
    pub against_code: i64,
    pub neutral_code: i64,
}

impl Default for VastLayout {
    fn default() -> Self {
        VastLayout {
            text_column: "post".into(),
            target_column: "topic_str".into(),
            label_column: "label".into(),
            favor_code: 1,
            against_code: 0,
            neutral_code: 2,
        }
    }
}

impl VastLayout {
    fn map_label(&self, code: i64) -> Option<StanceLabel> {
        if code == self.favor_code {
            Some(StanceLabel::Favor)
        } else if code == self.against_code {
            Some(StanceLabel::Against)
        } else if code == self.neutral_code {
            Some(StanceLabel::Neutral)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EzLayout {
    pub text_column: String,
    pub target_column: String,
    pub label_column: String,
}

impl Default for EzLayout {
    fn default() -> Self {
        EzLayout {
            text_column: "Text".into(),
            target_column: "Target 1".into(),
            label_column: "Stance 1".into(),
        }
    }
}

fn parse_ez_label(s: &str) -> Option<StanceLabel> {
    match s.trim().to_ascii_uppercase().as_str() {
        "FAVOR" | "FAVOUR" => Some(StanceLabel::Favor),
        "AGAINST" => Some(StanceLabel::Against),
        "NEUTRAL" | "NONE" => Some(StanceLabel::Neutral),
        _ => None,
    }
}

struct CsvTable {
    headers: csv::StringRecord,
    rows: Vec<(usize, csv::StringRecord)>,
}

fn read_csv(path: &Path) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let headers = reader.headers()?.clone();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push((line, rec));
    }
    Ok(CsvTable { headers, rows })
}

fn column(table: &CsvTable, path: &Path, name: &str) -> Result<usize> {
    table.headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: format!("missing column `{name}`"),
    })
}

fn normalize_newlines(s: &str) -> String {
    s.replace("\r\n", "\n")
}

pub fn adapt_vast(path: &Path, split: Split, layout: &VastLayout) -> Result<Dataset> {
    let table = read_csv(path)?;
    let (ti, gi, li) = (
        column(&table, path, &layout.text_column)?,
        column(&table, path, &layout.target_column)?,
        column(&table, path, &layout.label_column)?,
    );
    let mut samples = Vec::with_capacity(table.rows.len());
    for (row, (line, rec)) in table.rows.iter().enumerate() {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: *line,
            message,
        };
        let raw_label = rec.get(li).unwrap_or("").trim();
        let code: i64 = raw_label.parse().map_err(|_| err(format!("label `{raw_label}` is not an integer")))?;
        let gold = layout
            .map_label(code)
            .ok_or_else(|| err(format!("label {code} outside the declared label codes")))?;
        let text = normalize_newlines(rec.get(ti).unwrap_or(""));
        let target = normalize_newlines(rec.get(gi).unwrap_or(""));
        let sample = Sample::new(format!("vast-{split}-{row}"), text, target, Some(gold)).map_err(|e| err(e.to_string()))?;
        samples.push(sample);
    }
    Dataset::new("vast", split, samples)
}

pub fn adapt_ez(path: &Path, split: Split, layout: &EzLayout) -> Result<Dataset> {
    let table = read_csv(path)?;
    let (ti, gi, li) = (
        column(&table, path, &layout.text_column)?,
        column(&table, path, &layout.target_column)?,
        column(&table, path, &layout.label_column)?,
    );
    let mut samples = Vec::with_capacity(table.rows.len());
    for (row, (line, rec)) in table.rows.iter().enumerate() {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: *line,
            message,
        };
        let raw_label = rec.get(li).unwrap_or("");
        let gold = parse_ez_label(raw_label).ok_or_else(|| err(format!("unknown stance label `{raw_label}`")))?;
        let text = normalize_newlines(rec.get(ti).unwrap_or(""));
        let target = normalize_newlines(rec.get(gi).unwrap_or(""));
        let sample = Sample::new(format!("ez-{split}-{row}"), text, target, Some(gold)).map_err(|e| err(e.to_string()))?;
        samples.push(sample);
    }
    Dataset::new("ez", split, samples)
}
