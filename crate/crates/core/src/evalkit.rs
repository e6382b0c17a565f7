//! Metrics, multi-run aggregation and parameter sweeps.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Sample, StanceLabel};

/// Rows are gold labels, columns predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; 3]; 3]);

impl ConfusionMatrix {
    pub fn from_pairs(preds: &[StanceLabel], golds: &[StanceLabel]) -> Result<Self> {
        if preds.len() != golds.len() {
            return Err(Error::Invalid(format!("{} predictions for {} gold labels", preds.len(), golds.len())));
        }
        let mut m = [[0u64; 3]; 3];
        for (p, g) in preds.iter().zip(golds) {
            m[g.index()][p.index()] += 1;
        }
        Ok(ConfusionMatrix(m))
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    /// F1 of one class; 0 when precision + recall is 0.
    pub fn f1(&self, class: StanceLabel) -> f64 {
        let c = class.index();
        let tp = self.0[c][c] as f64;
        let predicted: u64 = (0..3).map(|g| self.0[g][c]).sum();
        let actual: u64 = self.0[c].iter().sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_f1: [f64; 3],
    pub macro_f1: f64,
    pub n: usize,
    pub run_seed: u64,
}

pub fn macro_f1(preds: &[StanceLabel], golds: &[StanceLabel], run_seed: u64) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(Error::Invalid("cannot score an empty prediction list".into()));
    }
    let cm = ConfusionMatrix::from_pairs(preds, golds)?;
    let per_class_f1 = StanceLabel::ALL.map(|c| cm.f1(c));
    Ok(EvalReport {
        macro_f1: per_class_f1.iter().sum::<f64>() / 3.0,
        per_class_f1,
        n: preds.len(),
        run_seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> MeanStd {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let std = if n > 1.0 {
        (xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub macro_f1: MeanStd,
    pub per_class_f1: [MeanStd; 3],
}

/// Mean and sample standard deviation of every metric across runs.
pub fn aggregate_runs(reports: &[EvalReport]) -> Result<RunAggregate> {
    if reports.is_empty() {
        return Err(Error::Invalid("no runs to aggregate".into()));
    }
    Ok(RunAggregate {
        runs: reports.len(),
        seeds: reports.iter().map(|r| r.run_seed).collect(),
        macro_f1: mean_std(reports.iter().map(|r| r.macro_f1)),
        per_class_f1: std::array::from_fn(|j| mean_std(reports.iter().map(move |r| r.per_class_f1[j]))),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    K,
    Beta,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::K => "k",
            SweepParam::Beta => "beta",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepParam::K),
            "beta" => Ok(SweepParam::Beta),
            other => Err(Error::Config(format!("cannot sweep `{other}` (expected k or beta)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub macro_f1: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParam,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Tab-separated table with a header row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("parameter\tvalue\tmacro_f1\tstatus\n");
        for r in &self.rows {
            let f1 = r.macro_f1.map(|v| format!("{v:.6}")).unwrap_or_default();
            let status = r
                .error
                .as_deref()
                .map(|e| format!("error: {}", e.replace(['\t', '\n'], " ")))
                .unwrap_or_else(|| "ok".into());
            let _ = writeln!(out, "{}\t{}\t{}\t{}", self.parameter.as_str(), r.value, f1, status);
        }
        out
    }
}

/// Runs `run` once per value. A failing value is recorded in its row and
/// the sweep moves on.
pub fn sweep<F>(parameter: SweepParam, values: &[f64], mut run: F) -> Result<SweepTable>
where
    F: FnMut(f64) -> Result<EvalReport>,
{
    if values.is_empty() {
        return Err(Error::Invalid("sweep needs at least one value".into()));
    }
    let rows = values
        .iter()
        .map(|&value| match run(value) {
            Ok(rep) => SweepRow {
                value,
                macro_f1: Some(rep.macro_f1),
                error: None,
            },
            Err(e) => {
                log::warn!("sweep {}={value} failed: {e}", parameter.as_str());
                SweepRow {
                    value,
                    macro_f1: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    Ok(SweepTable { parameter, rows })
}

/// Seeded stratified subsample of ⌈fraction·N⌉ samples. Per-class quotas
/// follow the class shares (largest remainder); file order is preserved.
pub fn stratified_subsample(samples: &[Sample], fraction: f64, seed: u64) -> Result<Vec<Sample>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("train fraction {fraction} must be in (0, 1]")));
    }
    let n = samples.len();
    let want = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if want >= n {
        return Ok(samples.to_vec());
    }
    let stratum = |s: &Sample| s.gold.map(|g| g.index()).unwrap_or(3);
    let mut strata: [Vec<usize>; 4] = Default::default();
    for (i, s) in samples.iter().enumerate() {
        strata[stratum(s)].push(i);
    }
    let exact: Vec<f64> = strata.iter().map(|s| s.len() as f64 * want as f64 / n as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut short = want - quota.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &c in order.iter().cycle() {
        if short == 0 {
            break;
        }
        if quota[c] < strata[c].len() {
            quota[c] += 1;
            short -= 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(want);
    for (c, idx) in strata.iter_mut().enumerate() {
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..quota[c]]);
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| samples[i].clone()).collect())
}
