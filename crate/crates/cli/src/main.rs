use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use timetrail_core::pipeline::{read_text, run_all, RunConfig, Stage};
use timetrail_core::Error;

#[derive(Parser)]
#[command(name = "timetrail", version, about = "Temporal fraud-detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (JSON). Defaults apply to every omitted field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Root seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write a synthetic labeled dataset.
    Generate,
    /// Cleanse the dataset and fix the train/validation/test boundaries.
    Preprocess,
    /// Compute the temporal attributes.
    Enrich,
    /// Correlation matrix and per-window correlation series.
    Correlate,
    /// Fit scalers, the logistic baseline and the tree ensemble.
    Train,
    /// Score both models on the test split and compare them.
    Evaluate,
    /// Explanation sequences for the top flagged test rows.
    Explain,
    /// Heatmap, flag series, sequence and TIS histogram figures.
    Plot,
    /// Every stage in order, then a manifest of content hashes.
    RunAll,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Command::Generate => Stage::Generate,
            Command::Preprocess => Stage::Preprocess,
            Command::Enrich => Stage::Enrich,
            Command::Correlate => Stage::Correlate,
            Command::Train => Stage::Train,
            Command::Evaluate => Stage::Evaluate,
            Command::Explain => Stage::Explain,
            Command::Plot => Stage::Plot,
            Command::RunAll => return None,
        })
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_json(&read_text(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    match cli.command.stage() {
        Some(stage) => {
            for name in stage.run(&cfg)? {
                println!("{}", cfg.out_dir.join(name).display());
            }
            if stage == Stage::Evaluate {
                print!("{}", read_text(&cfg.out_dir.join("comparison.txt"))?);
            }
        }
        None => {
            let manifest = run_all(&cfg)?;
            print!("{}", read_text(&cfg.out_dir.join("comparison.txt"))?);
            println!(
                "{} artifacts, manifest at {}",
                manifest.len(),
                cfg.out_dir.join("manifest.json").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
