use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use newsalign::config::{validate_config, PipelineConfig, ValidatedConfig};
use newsalign::pipeline::{run, Stage, StageStatus};
use newsalign::synth::{generate_corpus, write_corpus, SynthConfig};
use newsalign::Error;

/// Cross-lingual news sentence alignment and return-signal pipeline.
#[derive(Parser)]
#[command(name = "newsalign", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    /// Rerun even when inputs and parameters are unchanged.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run several stages in pipeline order.
    Run {
        #[command(flatten)]
        args: StageArgs,
        /// Comma-separated stage list; all stages when omitted.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<Stage>>,
    },
    Preprocess(StageArgs),
    Align(StageArgs),
    Aggregate(StageArgs),
    Score(StageArgs),
    Backtest(StageArgs),
    Report(StageArgs),
    /// Print the normalized config, or every validation error.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic corpus and a matching pipeline config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Synthetic corpus settings (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::StageDependency { .. } => 3,
        Error::Numerical(_) | Error::SingularSystem | Error::UndefinedSharpe => 4,
        _ => 1,
    }
}

fn load(path: &Path) -> Result<PipelineConfig, Error> {
    let ValidatedConfig { config, warnings } = validate_config(path)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(config)
}

fn run_stages(args: &StageArgs, stages: &[Stage]) -> Result<(), Error> {
    let config = load(&args.config)?;
    let summary = run(&config, stages, args.force)?;
    for (stage, status) in summary.outcomes {
        let word = match status {
            StageStatus::Ran => "ran",
            StageStatus::Skipped => "skipped (up to date)",
        };
        println!("{stage}: {word}");
    }
    Ok(())
}

fn synth(out: &Path, config: Option<&Path>, seed: Option<u64>) -> Result<(), Error> {
    let mut cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| {
                Error::Config(vec![newsalign::ConfigIssue {
                    field: "<synth>".into(),
                    message: e.message().to_string(),
                }])
            })?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let corpus = generate_corpus(&cfg)?;
    write_corpus(out, &corpus)?;

    let mut pipeline = PipelineConfig {
        dim: cfg.dim,
        ..PipelineConfig::default()
    };
    pipeline.paths.articles = Some("articles.jsonl".into());
    pipeline.paths.embeddings = Some("embeddings.jsonl".into());
    pipeline.paths.returns = Some("returns.csv".into());
    pipeline.paths.calendar = Some("calendar.toml".into());
    pipeline.scoring.first_train_year = cfg.start_year;
    let path = out.join("pipeline.toml");
    std::fs::write(&path, pipeline.to_toml()).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    println!(
        "wrote {} sentence records, {} returns and {} ground-truth masks to {}",
        corpus.records.len(),
        corpus.returns.len(),
        corpus.truth.len(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { args, stages } => run_stages(args, stages.as_deref().unwrap_or(&Stage::ALL)),
        Command::Preprocess(a) => run_stages(a, &[Stage::Preprocess]),
        Command::Align(a) => run_stages(a, &[Stage::Align]),
        Command::Aggregate(a) => run_stages(a, &[Stage::Aggregate]),
        Command::Score(a) => run_stages(a, &[Stage::Score]),
        Command::Backtest(a) => run_stages(a, &[Stage::Backtest]),
        Command::Report(a) => run_stages(a, &[Stage::Report]),
        Command::ValidateConfig { config } => validate_config(config).map(|v| {
            for w in &v.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", v.config.to_toml());
        }),
        Command::Synth { out, config, seed } => synth(out, config.as_deref(), *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
