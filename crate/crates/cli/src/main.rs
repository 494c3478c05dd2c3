use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use tasksynth::curate::{dataset_stats, read_sft, write_stats};
use tasksynth::manifest::Stage;
use tasksynth::pipeline::{run_pipeline, PipelineConfig, PipelineError, RunOptions};

#[derive(Parser)]
#[command(name = "tasksynth", version, about = "Synthesize ML tasks and collect agent trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run pipeline stages against a workspace.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of topics,propose,codegen,verify,collect,curate.
        #[arg(long, value_delimiter = ',')]
        stages: Vec<Stage>,
        /// Continue a run, skipping finished entities.
        #[arg(long)]
        resume: bool,
        /// Serve all completions from a transcript; the hub stays offline.
        #[arg(long, conflicts_with = "record")]
        replay: Option<PathBuf>,
        /// Append every completion to a transcript.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print statistics for an SFT file and write plots.
    Stats {
        dataset: PathBuf,
        /// Where to write stats.json and the plots; defaults to `<dataset>.stats/`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn stats(dataset: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let records = read_sft(&dataset)?;
    let report = dataset_stats(&records, &[]);
    let out = out.unwrap_or_else(|| {
        let mut name = dataset.file_name().unwrap_or_default().to_os_string();
        name.push(".stats");
        dataset.with_file_name(name)
    });
    write_stats(&report, &out).with_context(|| format!("writing {}", out.display()))?;
    emit(&serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run(
    config: PathBuf,
    stages: Vec<Stage>,
    resume: bool,
    replay: Option<PathBuf>,
    record: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
) -> Result<(), PipelineError> {
    let cfg = PipelineConfig::load(&config)?;
    let opts = RunOptions {
        stages,
        resume,
        replay,
        record,
        seed,
        workers,
    };
    let summary = run_pipeline(&cfg, &opts)?;
    emit(&serde_json::to_string_pretty(&summary).expect("plain data"));
    Ok(())
}

/// Prints to stdout; a reader that went away is not an error.
fn emit(text: &str) {
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            stages,
            resume,
            replay,
            record,
            seed,
            workers,
        } => run(config, stages, resume, replay, record, seed, workers).map_err(anyhow::Error::from),
        Command::Stats { dataset, out } => stats(dataset, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
