//! Synthetic stance data for exercising the pipeline with mock providers.
//!
//! Posts are built from clauses carrying cue words that the rule-based
//! mock LLM recognizes. The source statements used for the stance
//! documents talk about unrelated targets with the same cue vocabulary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::TrainConfig;
use crate::config::{DataConfig, EmbedConfig, RunConfig};
use crate::docprep::DocPrepConfig;
use crate::error::Result;
use crate::model::{write_canonical, Dataset, Sample, Split, StanceLabel};

const TARGETS: [&str; 16] = [
    "park renovation",
    "bike lanes",
    "school uniforms",
    "remote work",
    "nuclear energy",
    "public transit",
    "four day week",
    "city curfew",
    "rent control",
    "solar farms",
    "tax rebate",
    "water fluoridation",
    "speed cameras",
    "stadium project",
    "library merger",
    "night markets",
];

const SOURCE_TARGETS: [&str; 8] = [
    "harbor expansion",
    "zoo funding",
    "airport noise rules",
    "museum tickets",
    "ferry timetable",
    "forest trails",
    "opera subsidy",
    "canal cleanup",
];

const FAVOR: [&str; 10] = [
    "I strongly support the {t} and think it is great",
    "The {t} is a good idea and a real benefit",
    "We should welcome the {t} because it is helpful",
    "I love the {t} and I agree with it",
    "I applaud the {t} and praise everyone behind it",
    "Honestly the {t} is great and I support it",
    "Everyone will benefit from the {t}, it is good",
    "I agree that the {t} is helpful",
    "People should praise the {t}, I love it",
    "I welcome the {t} and applaud the effort",
];

const AGAINST: [&str; 10] = [
    "I strongly oppose the {t} and think it is terrible",
    "The {t} is a bad idea and will harm people",
    "We should reject the {t} because it is dangerous",
    "I hate the {t} and it is stupid",
    "They should ban the {t}, it is awful",
    "Honestly the {t} is terrible and I oppose it",
    "The {t} will harm everyone, it is bad",
    "I reject the {t} as dangerous",
    "People should oppose the {t}, I hate it",
    "What an awful {t}, ban it",
];

const NEUTRAL: [&str; 10] = [
    "The council will mention the {t} at the meeting",
    "A memo will describe the {t} and its schedule",
    "The agenda for the meeting lists the {t}",
    "Officials announce the schedule for the {t} in a memo",
    "The summary will note the {t} and the agenda",
    "A report will describe the {t} at the next meeting",
    "Staff will announce the {t} in a summary",
    "The memo and report mention the {t}",
    "The schedule of the {t} is in the agenda",
    "Reporters note the meeting about the {t}",
];

const FILLER: [&str; 5] = [
    "The {t} came up again this week",
    "People in town keep talking about the {t}",
    "My neighbor asked me about the {t}",
    "Yesterday there was talk of the {t}",
    "Many residents have heard of the {t}",
];

/// Cue words of the default rule-based mock LLM.
pub const CUE_WORDS: [&str; 30] = [
    "support",
    "great",
    "welcome",
    "benefit",
    "love",
    "good",
    "praise",
    "agree",
    "applaud",
    "helpful",
    "oppose",
    "terrible",
    "reject",
    "harm",
    "hate",
    "bad",
    "ban",
    "stupid",
    "awful",
    "dangerous",
    "report",
    "mention",
    "schedule",
    "describe",
    "note",
    "meeting",
    "announce",
    "agenda",
    "memo",
    "summary",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub n_source_per_class: usize,
    /// Share of posts that also contain a clause of another stance.
    pub distractor_rate: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            n_train: 300,
            n_dev: 60,
            n_test: 100,
            n_source_per_class: 40,
            distractor_rate: 0.1,
            seed: 17,
        }
    }
}

pub struct FixtureData {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    pub source: Dataset,
}

fn clauses(label: StanceLabel) -> &'static [&'static str; 10] {
    match label {
        StanceLabel::Favor => &FAVOR,
        StanceLabel::Against => &AGAINST,
        StanceLabel::Neutral => &NEUTRAL,
    }
}

fn fill(template: &str, target: &str) -> String {
    template.replace("{t}", target)
}

fn post(rng: &mut ChaCha8Rng, label: StanceLabel, target: &str, distractor_rate: f64) -> String {
    let pool = clauses(label);
    let mut parts: Vec<String> = pool.choose_multiple(rng, 2).map(|c| fill(c, target)).collect();
    if rng.gen_bool(0.5) {
        parts.insert(rng.gen_range(0..=parts.len()), fill(FILLER.choose(rng).expect("non-empty"), target));
    }
    if rng.gen_bool(distractor_rate) {
        let other = StanceLabel::ALL.iter().copied().filter(|l| *l != label).collect::<Vec<_>>();
        let other = *other.choose(rng).expect("two other labels");
        parts.push(fill(clauses(other).choose(rng).expect("non-empty"), target));
    }
    parts.join(". ") + "."
}

fn split(rng: &mut ChaCha8Rng, prefix: &str, split: Split, n: usize, distractor_rate: f64) -> Result<Dataset> {
    let mut labels: Vec<StanceLabel> = (0..n).map(|i| StanceLabel::ALL[i % 3]).collect();
    labels.shuffle(rng);
    let samples = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let target = *TARGETS.choose(rng).expect("non-empty");
            Sample::new(format!("{prefix}-{i}"), post(rng, label, target, distractor_rate), target, Some(label))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(prefix, split, samples)
}

pub fn generate(spec: &FixtureSpec) -> Result<FixtureData> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train = split(&mut rng, "train", Split::Train, spec.n_train, spec.distractor_rate)?;
    let dev = split(&mut rng, "dev", Split::Dev, spec.n_dev, spec.distractor_rate)?;
    let test = split(&mut rng, "test", Split::Test, spec.n_test, spec.distractor_rate)?;
    let mut source = Vec::new();
    for label in StanceLabel::ALL {
        for i in 0..spec.n_source_per_class {
            let target = SOURCE_TARGETS[i % SOURCE_TARGETS.len()];
            let text = fill(clauses(label).choose(&mut rng).expect("non-empty"), target) + ".";
            source.push(Sample::new(format!("src-{}-{i}", label.as_str()), text, target, Some(label))?);
        }
    }
    Ok(FixtureData {
        train,
        dev,
        test,
        source: Dataset::new("source", Split::Train, source)?,
    })
}

/// Configuration tuned for the fixture: mock providers, 64-dimensional
/// embeddings with cue words up-weighted, and a faster learning rate than
/// the default.
pub fn fixture_config(data_dir: &Path, run_dir: PathBuf) -> RunConfig {
    RunConfig {
        run_dir,
        data: DataConfig {
            train: data_dir.join("train.jsonl"),
            dev: Some(data_dir.join("dev.jsonl")),
            test: data_dir.join("test.jsonl"),
            source: data_dir.join("source.jsonl"),
            ..DataConfig::default()
        },
        embed: EmbedConfig {
            dim: 64,
            token_weights: CUE_WORDS.iter().map(|w| (w.to_string(), 3.0)).collect::<BTreeMap<_, _>>(),
            ..EmbedConfig::default()
        },
        docprep: DocPrepConfig {
            // Mock embeddings of same-domain statements are far more similar
            // than real ones; 0.05 would leave every bucket empty.
            threshold: 0.78,
            ..DocPrepConfig::default()
        },
        train: TrainConfig {
            lr: 5e-3,
            epochs: 20,
            ..TrainConfig::default()
        },
        ..RunConfig::default()
    }
}

/// Writes the four data files and `fixture.toml` (paths relative to it)
/// into `dir`. Returns the config path.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<PathBuf> {
    let data = generate(spec)?;
    for (name, ds) in [("train", &data.train), ("dev", &data.dev), ("test", &data.test), ("source", &data.source)] {
        write_canonical(ds, &dir.join(format!("{name}.jsonl")))?;
    }
    let mut cfg = fixture_config(Path::new(""), PathBuf::from("runs"));
    cfg.data.train = "train.jsonl".into();
    cfg.data.dev = Some("dev.jsonl".into());
    cfg.data.test = "test.jsonl".into();
    cfg.data.source = "source.jsonl".into();
    let path = dir.join("fixture.toml");
    crate::artifact::write_atomic(&path, cfg.to_toml()?.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_balance_and_determinism() {
        let a = generate(&FixtureSpec::default()).unwrap();
        assert_eq!((a.train.len(), a.dev.len(), a.test.len(), a.source.len()), (300, 60, 100, 120));
        let favor = a.train.samples.iter().filter(|s| s.gold == Some(StanceLabel::Favor)).count();
        assert_eq!(favor, 100);
        let b = generate(&FixtureSpec::default()).unwrap();
        assert_eq!(a.test.samples, b.test.samples);
    }

    #[test]
    fn written_config_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), &FixtureSpec::default()).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.data.test, dir.path().join("test.jsonl"));
        assert_eq!(cfg.run_dir, dir.path().join("runs"));
    }
}
