//! Resumable stage runner.
//!
//! Every seed gets its own directory under the run directory. A stage
//! writes its artifacts atomically, then a manifest under `manifests/`
//! recording the digests of the files it read and wrote and of the
//! configuration it depends on. Before a stage runs, the manifests of all
//! upstream stages are checked against the files on disk and the current
//! configuration.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{file_digest, read_json, read_jsonl, sha256_hex, write_atomic, write_json, write_jsonl};
use crate::classifier::{
    evaluate_examples, predict_example, read_checkpoint, train, write_checkpoint, EpochLog, ExampleInput, ExamplePrediction, RationaleInput,
};
use crate::config::{Providers, RunConfig};
use crate::docprep::{build_documents, StanceDocuments};
use crate::error::{Error, Result};
use crate::evalkit::{aggregate_runs, macro_f1, stratified_subsample, sweep, EvalReport, RunAggregate, SweepParam};
use crate::model::{Dataset, Split, StanceLabel};
use crate::providers::{Embedder, ProviderStats};
use crate::ranking::{build_instruction, Calibration, RankingQuery, RelevanceProfile, Scorer, ScorerKind, DEFAULT_INSTRUCTION};
use crate::rationale::{generate, RationaleRecord};
use crate::selection::{group_and_select, GroupedSelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    PrepareDocs,
    GenRationales,
    Rank,
    Select,
    Train,
    Predict,
    Evaluate,
    Sweep,
}

impl Stage {
    /// The main chain in execution order; `sweep` hangs off `select`.
    pub const CHAIN: [Stage; 7] = [
        Stage::PrepareDocs,
        Stage::GenRationales,
        Stage::Rank,
        Stage::Select,
        Stage::Train,
        Stage::Predict,
        Stage::Evaluate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::PrepareDocs => "prepare-docs",
            Stage::GenRationales => "gen-rationales",
            Stage::Rank => "rank",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::Sweep => "sweep",
        }
    }

    pub fn dependency(self) -> Option<Stage> {
        match self {
            Stage::PrepareDocs => None,
            Stage::GenRationales => Some(Stage::PrepareDocs),
            Stage::Rank => Some(Stage::GenRationales),
            Stage::Select => Some(Stage::Rank),
            Stage::Train => Some(Stage::Select),
            Stage::Predict => Some(Stage::Train),
            Stage::Evaluate => Some(Stage::Predict),
            Stage::Sweep => Some(Stage::Select),
        }
    }

    /// All stages that must have run, nearest first.
    pub fn upstream(self) -> Vec<Stage> {
        let mut out = Vec::new();
        let mut cur = self.dependency();
        while let Some(s) = cur {
            out.push(s);
            cur = s.dependency();
        }
        out
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::CHAIN
            .into_iter()
            .chain([Stage::Sweep])
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub config_digest: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub sample_id: String,
    pub profiles: Vec<RelevanceProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectRecord {
    pub sample_id: String,
    pub selection: GroupedSelection,
}

const SPLITS: [Split; 3] = [Split::Train, Split::Dev, Split::Test];
const DOCS_DIR: &str = "docs";
const PARAMS_FILE: &str = "model/params.bin";
const TRAIN_LOG_FILE: &str = "model/train_log.jsonl";
const CALIBRATION_FILE: &str = "model/calibration.json";
const PREDICTIONS_FILE: &str = "predictions/test.jsonl";
const REPORT_FILE: &str = "report.json";

fn split_file(dir: &str, split: Split) -> String {
    format!("{dir}/{}.jsonl", split.as_str())
}

/// Pipeline for one seed.
pub struct Pipeline {
    cfg: RunConfig,
    seed: u64,
    dir: PathBuf,
    providers: Providers,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    /// Validates the configuration, creates `<run_dir>/seed-<seed>` and
    /// freezes the resolved configuration into it.
    pub fn new(cfg: &RunConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut cfg = cfg.clone();
        cfg.seeds = vec![seed];
        cfg.train.seed = seed;
        let dir = cfg.run_dir.join(format!("seed-{seed}"));
        write_atomic(&dir.join("config.toml"), cfg.to_toml()?.as_bytes())?;
        let providers = Providers::build(&cfg)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Pipeline {
            cfg,
            seed,
            dir,
            providers,
            pool,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &ProviderStats {
        &self.providers.stats
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.dir.join("manifests").join(format!("{stage}.json"))
    }

    pub fn manifest(&self, stage: Stage) -> Result<Option<Manifest>> {
        let p = self.manifest_path(stage);
        if p.exists() {
            read_json(&p).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Digest of the configuration slice a stage's output depends on.
    fn config_digest(&self, stage: Stage) -> Result<String> {
        let c = &self.cfg;
        let slice = match stage {
            Stage::PrepareDocs => serde_json::to_string(&(&c.docprep, &c.embed, &c.data))?,
            Stage::GenRationales => {
                let (imp, exp) = c.llm.templates()?;
                serde_json::to_string(&(
                    &c.llm,
                    (&imp.system, &imp.user, &exp.system, &exp.user),
                    c.error_policy,
                    c.train_fraction,
                    self.seed,
                ))?
            }
            Stage::Rank => serde_json::to_string(&(&c.rank, &c.rerank, &c.embed, &c.llm.settings, self.instruction()?))?,
            Stage::Select => serde_json::to_string(&(&c.select, c.rank.calibration_trainable))?,
            Stage::Train => serde_json::to_string(&(&c.train, &c.select, &c.embed, &c.docprep.separator))?,
            Stage::Predict => serde_json::to_string(&(c.train.vote_mode, &c.select))?,
            Stage::Evaluate => String::new(),
            Stage::Sweep => serde_json::to_string(&(&c.sweep, &c.train, &c.select, &c.embed, &c.docprep.separator))?,
        };
        Ok(sha256_hex(slice.as_bytes()))
    }

    /// Checks upstream stages from the first one down, so a stale artifact
    /// is blamed on the earliest stage that has to rerun.
    fn check_upstream(&self, stage: Stage) -> Result<()> {
        for dep in stage.upstream().into_iter().rev() {
            let m = self.manifest(dep)?.ok_or_else(|| Error::MissingDependency {
                stage: stage.to_string(),
                dependency: dep.to_string(),
            })?;
            let stale = |detail: String| Error::StaleArtifact {
                stage: stage.to_string(),
                dependency: dep.to_string(),
                detail,
            };
            if m.config_digest != self.config_digest(dep)? {
                return Err(stale("its configuration changed since it ran".into()));
            }
            for (name, digest) in m.inputs.iter().chain(&m.outputs) {
                let path = self.resolve_recorded(name);
                let now = file_digest(&path).map_err(|_| stale(format!("{name} is missing")))?;
                if &now != digest {
                    return Err(stale(format!("{name} changed since it ran")));
                }
            }
        }
        Ok(())
    }

    fn resolve_recorded(&self, name: &str) -> PathBuf {
        match name.strip_prefix("file:") {
            Some(abs) => PathBuf::from(abs),
            None => self.dir.join(name),
        }
    }

    fn finish(&self, stage: Stage, inputs: &[String], outputs: &[String]) -> Result<Manifest> {
        let digests =
            |names: &[String]| -> Result<BTreeMap<String, String>> { names.iter().map(|n| Ok((n.clone(), file_digest(&self.resolve_recorded(n))?))).collect() };
        let m = Manifest {
            stage,
            config_digest: self.config_digest(stage)?,
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
        };
        write_json(&self.manifest_path(stage), &m)?;
        Ok(m)
    }

    fn data_inputs(&self) -> Vec<String> {
        self.cfg.data.files().iter().map(|p| format!("file:{}", p.display())).collect()
    }

    fn instruction(&self) -> Result<String> {
        let template = match &self.cfg.rank.instruction {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?,
            None => DEFAULT_INSTRUCTION.to_string(),
        };
        Ok(build_instruction(&template, &self.cfg.rank.query))
    }

    fn initial_calibration(&self) -> Calibration {
        Calibration::identity(self.cfg.rank.calibration_trainable)
    }

    fn load_split(&self, split: Split) -> Result<Option<Dataset>> {
        self.cfg.data.load(split)
    }

    /// Splits that have rationale artifacts, i.e. the configured ones.
    fn splits(&self) -> Vec<Split> {
        SPLITS.into_iter().filter(|s| *s != Split::Dev || self.cfg.data.dev.is_some()).collect()
    }

    /// Runs one stage after checking its upstream artifacts.
    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        self.check_upstream(stage)?;
        log::info!("[seed {}] running {stage}", self.seed);
        match stage {
            Stage::PrepareDocs => self.prepare_docs(),
            Stage::GenRationales => self.gen_rationales(),
            Stage::Rank => self.rank(),
            Stage::Select => self.select(),
            Stage::Train => self.train(),
            Stage::Predict => self.predict(),
            Stage::Evaluate => self.evaluate().map(|_| ()),
            Stage::Sweep => self.sweep().map(|_| ()),
        }
    }

    /// prepare-docs through evaluate.
    pub fn run_all(&self) -> Result<EvalReport> {
        for stage in Stage::CHAIN {
            self.run_stage(stage)?;
        }
        self.report()
    }

    pub fn report(&self) -> Result<EvalReport> {
        read_json(&self.path(REPORT_FILE))
    }

    fn prepare_docs(&self) -> Result<()> {
        let source = self.cfg.data.load_source()?;
        let train = self.load_split(Split::Train)?.expect("train split is required");
        let test = self.load_split(Split::Test)?.expect("test split is required");
        let mut eval_train = train;
        if let Some(dev) = self.load_split(Split::Dev)? {
            eval_train.samples.extend(dev.samples);
        }
        let docs = self
            .pool
            .install(|| build_documents(&source, &eval_train, &test, &self.providers.embedder, &self.cfg.docprep))?;
        docs.write_dir(&self.path(DOCS_DIR))?;
        let outputs: Vec<String> = StanceDocuments::file_names().iter().map(|f| format!("{DOCS_DIR}/{f}")).collect();
        self.finish(Stage::PrepareDocs, &self.data_inputs(), &outputs)?;
        Ok(())
    }

    fn gen_rationales(&self) -> Result<()> {
        let (imp, exp) = self.cfg.llm.templates()?;
        let mut outputs = Vec::new();
        for split in self.splits() {
            let mut data = self.load_split(split)?.expect("configured split");
            if split == Split::Train && self.cfg.train_fraction < 1.0 {
                let n = data.samples.len();
                data.samples = stratified_subsample(&data.samples, self.cfg.train_fraction, self.seed)?;
                log::info!("training on {} of {n} samples", data.samples.len());
            }
            let records = self.pool.install(|| {
                data.samples
                    .par_iter()
                    .map(|s| {
                        generate(s, &imp, &exp, &self.providers.llm, &self.cfg.llm.settings, self.cfg.error_policy).map(|r| RationaleRecord {
                            sample: s.clone(),
                            rationales: r,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let rel = split_file("rationales", split);
            write_jsonl(&self.path(&rel), &records)?;
            outputs.push(rel);
        }
        self.finish(Stage::GenRationales, &self.data_inputs(), &outputs)?;
        Ok(())
    }

    fn rationales(&self, split: Split) -> Result<Vec<RationaleRecord>> {
        read_jsonl(&self.path(&split_file("rationales", split)))
    }

    fn rank(&self) -> Result<()> {
        let docs = StanceDocuments::read_dir(&self.path(DOCS_DIR))?;
        let instruction = self.instruction()?;
        let opts = &self.cfg.rank.query;
        let mut scorer = Scorer::new(self.cfg.rank.scorer, &docs).with_bm25(self.cfg.rank.bm25);
        match self.cfg.rank.scorer {
            ScorerKind::Reranker => scorer = scorer.with_reranker(&self.providers.reranker),
            ScorerKind::Cosine => scorer = scorer.with_embedder(&self.providers.embedder, &docs)?,
            ScorerKind::LlmRank => scorer = scorer.with_llm(&self.providers.llm, self.cfg.llm.settings.model.clone()),
            ScorerKind::Bm25 | ScorerKind::LlmScores => {}
        }
        let cal = self.initial_calibration();
        let mut inputs: Vec<String> = StanceDocuments::file_names().iter().map(|f| format!("{DOCS_DIR}/{f}")).collect();
        let mut outputs = Vec::new();
        for split in self.splits() {
            let records = self.rationales(split)?;
            let ranked = self.pool.install(|| {
                records
                    .par_iter()
                    .map(|rec| {
                        let set = &rec.rationales;
                        let profiles = set
                            .implicit
                            .iter()
                            .enumerate()
                            .map(|(j, r)| {
                                let q = RankingQuery::new(&instruction, &r.text, &rec.sample.target, opts);
                                let llm = set.llm_stance_scores.as_ref().map(|v| &v[j]);
                                let raw = scorer.profile_raw(&q, &docs, llm)?;
                                RelevanceProfile::new(r.rationale_id.clone(), raw, &cal)
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Ok(RankRecord {
                            sample_id: rec.sample.id.clone(),
                            profiles,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let rel = split_file("ranking", split);
            write_jsonl(&self.path(&rel), &ranked)?;
            inputs.push(split_file("rationales", split));
            outputs.push(rel);
        }
        self.finish(Stage::Rank, &inputs, &outputs)?;
        Ok(())
    }

    fn select(&self) -> Result<()> {
        let (mut inputs, mut outputs) = (Vec::new(), Vec::new());
        for split in self.splits() {
            let src = split_file("ranking", split);
            let ranked: Vec<RankRecord> = read_jsonl(&self.path(&src))?;
            let selected = ranked
                .iter()
                .map(|r| {
                    let selection = if r.profiles.is_empty() {
                        GroupedSelection::default()
                    } else {
                        group_and_select(&r.profiles, &self.cfg.select)?
                    };
                    Ok(SelectRecord {
                        sample_id: r.sample_id.clone(),
                        selection,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let rel = split_file("selection", split);
            write_jsonl(&self.path(&rel), &selected)?;
            inputs.push(src);
            outputs.push(rel);
        }
        self.finish(Stage::Select, &inputs, &outputs)?;
        Ok(())
    }

    fn embed_or_zero(&self, text: &str) -> Result<Vec<f64>> {
        if text.trim().is_empty() {
            Ok(vec![0.0; self.cfg.embed.dim])
        } else {
            Ok(self.providers.embedder.embed(text)?.values)
        }
    }

    /// Joins rationale, ranking and selection artifacts of a split into
    /// classifier inputs, embedding the rationales on the way.
    pub fn examples(&self, split: Split) -> Result<Vec<ExampleInput>> {
        let records = self.rationales(split)?;
        let ranked: Vec<RankRecord> = read_jsonl(&self.path(&split_file("ranking", split)))?;
        let selected: Vec<SelectRecord> = read_jsonl(&self.path(&split_file("selection", split)))?;
        let ranked: HashMap<&str, &RankRecord> = ranked.iter().map(|r| (r.sample_id.as_str(), r)).collect();
        let selected: HashMap<&str, &SelectRecord> = selected.iter().map(|r| (r.sample_id.as_str(), r)).collect();
        let sep = &self.cfg.docprep.separator;
        self.pool.install(|| {
            records
                .par_iter()
                .map(|rec| {
                    let id = rec.sample.id.as_str();
                    let missing = |stage: &str| Error::MissingStageData {
                        stage: stage.into(),
                        sample: id.into(),
                    };
                    let rank = ranked.get(id).ok_or_else(|| missing("rank"))?;
                    selected.get(id).ok_or_else(|| missing("select"))?;
                    if rank.profiles.len() != rec.rationales.implicit.len() {
                        return Err(missing("rank"));
                    }
                    let rationales = rec
                        .rationales
                        .implicit
                        .iter()
                        .zip(&rank.profiles)
                        .map(|(r, p)| {
                            Ok(RationaleInput {
                                id: r.rationale_id.clone(),
                                embedding: self.embed_or_zero(&format!("{} {sep} {}", r.text, rec.sample.target))?,
                                raw: p.raw,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(ExampleInput {
                        sample_id: id.to_string(),
                        gold: rec.sample.gold,
                        explicit: self.embed_or_zero(&rec.rationales.explicit.text)?,
                        rationales,
                    })
                })
                .collect()
        })
    }

    fn stage_files(&self, split: Split) -> Vec<String> {
        ["rationales", "ranking", "selection"].iter().map(|d| split_file(d, split)).collect()
    }

    fn dev_examples(&self) -> Result<Vec<ExampleInput>> {
        if self.cfg.data.dev.is_some() {
            self.examples(Split::Dev)
        } else {
            Ok(Vec::new())
        }
    }

    fn train(&self) -> Result<()> {
        let train_set = self.examples(Split::Train)?;
        let dev_set = self.dev_examples()?;
        let out = self
            .pool
            .install(|| train(&train_set, &dev_set, &self.cfg.train, &self.cfg.select, self.initial_calibration()))?;
        log::info!("kept parameters from epoch {}", out.best_epoch);
        write_checkpoint(&self.path(PARAMS_FILE), &out.params, self.seed)?;
        write_jsonl(&self.path(TRAIN_LOG_FILE), &out.log)?;
        write_json(&self.path(CALIBRATION_FILE), &out.params.calibration)?;
        let mut inputs = self.stage_files(Split::Train);
        if self.cfg.data.dev.is_some() {
            inputs.extend(self.stage_files(Split::Dev));
        }
        self.finish(Stage::Train, &inputs, &[PARAMS_FILE.into(), TRAIN_LOG_FILE.into(), CALIBRATION_FILE.into()])?;
        Ok(())
    }

    pub fn train_log(&self) -> Result<Vec<EpochLog>> {
        read_jsonl(&self.path(TRAIN_LOG_FILE))
    }

    fn predict(&self) -> Result<()> {
        let (params, _) = read_checkpoint(&self.path(PARAMS_FILE))?;
        let test = self.examples(Split::Test)?;
        let mode = self.cfg.train.vote_mode;
        let preds = self.pool.install(|| {
            test.par_iter()
                .map(|ex| predict_example(&params, ex, &self.cfg.select, mode))
                .collect::<Result<Vec<_>>>()
        })?;
        write_jsonl(&self.path(PREDICTIONS_FILE), &preds)?;
        let mut inputs = vec![PARAMS_FILE.to_string()];
        inputs.extend(self.stage_files(Split::Test));
        self.finish(Stage::Predict, &inputs, &[PREDICTIONS_FILE.into()])?;
        Ok(())
    }

    fn evaluate(&self) -> Result<EvalReport> {
        let preds: Vec<ExamplePrediction> = read_jsonl(&self.path(PREDICTIONS_FILE))?;
        let test = self.rationales(Split::Test)?;
        let gold: HashMap<&str, Option<StanceLabel>> = test.iter().map(|r| (r.sample.id.as_str(), r.sample.gold)).collect();
        let mut golds = Vec::with_capacity(preds.len());
        for p in &preds {
            match gold.get(p.sample_id.as_str()) {
                Some(Some(g)) => golds.push(*g),
                Some(None) => return Err(Error::Invalid(format!("test sample `{}` has no gold stance", p.sample_id))),
                None => {
                    return Err(Error::MissingStageData {
                        stage: "gen-rationales".into(),
                        sample: p.sample_id.clone(),
                    })
                }
            }
        }
        let labels: Vec<StanceLabel> = preds.iter().map(|p| p.label).collect();
        let report = macro_f1(&labels, &golds, self.seed)?;
        write_json(&self.path(REPORT_FILE), &report)?;
        self.finish(
            Stage::Evaluate,
            &[PREDICTIONS_FILE.into(), split_file("rationales", Split::Test)],
            &[REPORT_FILE.into()],
        )?;
        Ok(report)
    }

    /// Trains and evaluates once per configured sweep value, writing a
    /// child report per value and a TSV table.
    pub fn sweep(&self) -> Result<crate::evalkit::SweepTable> {
        let train_set = self.examples(Split::Train)?;
        let dev_set = self.dev_examples()?;
        let test_set = self.examples(Split::Test)?;
        let param = self.cfg.sweep.parameter;
        let mut outputs = Vec::new();
        let table = sweep(param, &self.cfg.sweep.values, |value| {
            let (mut tcfg, mut scfg) = (self.cfg.train.clone(), self.cfg.select.clone());
            match param {
                SweepParam::K => {
                    if value < 1.0 || value.fract() != 0.0 {
                        return Err(Error::Config(format!("k = {value} is not a positive integer")));
                    }
                    scfg.k = value as usize;
                }
                SweepParam::Beta => tcfg.beta = value,
            }
            let out = self.pool.install(|| train(&train_set, &dev_set, &tcfg, &scfg, self.initial_calibration()))?;
            let report = self
                .pool
                .install(|| evaluate_examples(&out.params, &test_set, &scfg, tcfg.vote_mode, self.seed))?;
            let rel = format!("sweep/{}-{value}/report.json", param.as_str());
            write_json(&self.path(&rel), &report)?;
            outputs.push(rel);
            Ok(report)
        })?;
        let rel = format!("sweep/{}.tsv", param.as_str());
        write_atomic(&self.path(&rel), table.to_tsv().as_bytes())?;
        outputs.push(rel);
        let mut inputs = Vec::new();
        for split in self.splits() {
            inputs.extend(self.stage_files(split));
        }
        self.finish(Stage::Sweep, &inputs, &outputs)?;
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub reports: Vec<EvalReport>,
    pub aggregate: RunAggregate,
}

/// Every stage for every configured seed, then the cross-seed aggregate
/// written to `<run_dir>/aggregate.json`.
pub fn end_to_end(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let mut reports = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        reports.push(Pipeline::new(cfg, seed)?.run_all()?);
    }
    let summary = RunSummary {
        aggregate: aggregate_runs(&reports)?,
        reports,
    };
    write_json(&cfg.run_dir.join("aggregate.json"), &summary)?;
    Ok(summary)
}
