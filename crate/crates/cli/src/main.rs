use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iris::classifier::VoteMode;
use iris::config::RunConfig;
use iris::evalkit::SweepParam;
use iris::fixture::{write_fixture, FixtureSpec};
use iris::pipeline::{end_to_end, Pipeline, Stage};
use iris::ranking::ScorerKind;

/// Interpretable zero-shot stance detection pipeline.
#[derive(Parser)]
#[command(name = "iris", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the favor/against/neutral stance documents.
    PrepareDocs(StageArgs),
    /// Generate implicit and explicit rationales with the LLM.
    GenRationales(StageArgs),
    /// Score every implicit rationale against the stance documents.
    Rank(StageArgs),
    /// Split rationales into relevant/irrelevant groups and pick diverse subsets.
    Select(StageArgs),
    /// Train the classification head.
    Train(StageArgs),
    /// Predict test-set stances by majority vote.
    Predict(StageArgs),
    /// Score the predictions.
    Evaluate(StageArgs),
    /// Train and evaluate once per value of k or beta.
    Sweep(SweepArgs),
    /// Run every stage for every configured seed and aggregate.
    Run(StageArgs),
    /// Write the synthetic fixture data and its config.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = FixtureSpec::default().seed)]
        seed: u64,
    },
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    /// Only this seed instead of every configured one.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    vote_mode: Option<VoteMode>,
    #[arg(long)]
    scorer: Option<ScorerKind>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    stage: StageArgs,
    #[arg(long)]
    parameter: Option<SweepParam>,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
}

impl StageArgs {
    fn load(&self) -> iris::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(f) = self.train_fraction {
            cfg.train_fraction = f;
        }
        if let Some(m) = self.vote_mode {
            cfg.train.vote_mode = m;
        }
        if let Some(s) = self.scorer {
            cfg.rank.scorer = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run_stage(stage: Stage, cfg: &RunConfig) -> iris::Result<()> {
    for &seed in &cfg.seeds {
        let p = Pipeline::new(cfg, seed)?;
        match stage {
            Stage::Sweep => print!("{}", p.sweep()?.to_tsv()),
            _ => p.run_stage(stage)?,
        }
        if stage == Stage::Evaluate {
            println!("{}", serde_json::to_string(&p.report()?)?);
        }
        log::info!(
            "[seed {seed}] {stage} done; {} provider calls, {} cache hits",
            p.stats().provider_calls(),
            p.stats().hits()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (label, result) = match cli.command {
        Command::Fixture { out, seed } => (
            "fixture".to_string(),
            std::fs::create_dir_all(&out)
                .map_err(|e| iris::Error::Invalid(format!("creating {}: {e}", out.display())))
                .and_then(|_| {
                    write_fixture(
                        &out,
                        &FixtureSpec {
                            seed,
                            ..FixtureSpec::default()
                        },
                    )
                })
                .map(|path| println!("{}", path.display())),
        ),
        Command::Run(args) => (
            "run".to_string(),
            args.load().and_then(|cfg| end_to_end(&cfg)).and_then(|s| {
                println!("{}", serde_json::to_string_pretty(&s)?);
                Ok(())
            }),
        ),
        Command::Sweep(args) => {
            let result = args.stage.load().and_then(|mut cfg| {
                if let Some(p) = args.parameter {
                    cfg.sweep.parameter = p;
                }
                if let Some(v) = args.values {
                    cfg.sweep.values = v;
                }
                cfg.validate()?;
                run_stage(Stage::Sweep, &cfg)
            });
            (Stage::Sweep.to_string(), result)
        }
        Command::PrepareDocs(a) => staged(Stage::PrepareDocs, a),
        Command::GenRationales(a) => staged(Stage::GenRationales, a),
        Command::Rank(a) => staged(Stage::Rank, a),
        Command::Select(a) => staged(Stage::Select, a),
        Command::Train(a) => staged(Stage::Train, a),
        Command::Predict(a) => staged(Stage::Predict, a),
        Command::Evaluate(a) => staged(Stage::Evaluate, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("iris: stage `{label}` failed: {e}");
            ExitCode::FAILURE
        }
    }
}

fn staged(stage: Stage, args: StageArgs) -> (String, iris::Result<()>) {
    (stage.to_string(), args.load().and_then(|cfg| run_stage(stage, &cfg)))
}
