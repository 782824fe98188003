//! Command-line front end: run experiments from a TOML config, replay
//! transcripts, render reports, and run the simulated mechanism comparison.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use selfcontrast::harness::{
    emit_report, replay_transcript, run_experiment, run_mechanism_comparison, ExperimentConfig,
    ExperimentSummary, ReportFormat,
};

#[derive(Parser)]
#[command(
    name = "selfcontrast",
    version,
    about = "Contrastive reflection harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config file.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
        /// Directory for the transcript and summary (default: current dir).
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Verify a transcript and recompute its summary without any backend.
    Replay {
        /// Path to a .transcript.jsonl file.
        transcript: PathBuf,
    },
    /// Render a table from one or more summary JSON files.
    Report {
        /// Summary files produced by `run`.
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Experiment id of the baseline row for delta columns.
        #[arg(long)]
        baseline: Option<String>,
        /// md or csv.
        #[arg(long, default_value = "md")]
        format: String,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the contrasting-incorrect-solutions comparison against a
    /// simulator profile (TOML with the [backend.profile] fields).
    Simulate {
        /// Path to a profile TOML file.
        profile: PathBuf,
        /// Number of simulated tasks.
        #[arg(long, default_value_t = 10_000)]
        tasks: usize,
        /// Base seed.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { config, out_dir } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let config = ExperimentConfig::from_toml(&text)?;
            std::fs::create_dir_all(&out_dir)?;
            let (summary, transcript) = run_experiment(&config, Some(&out_dir))?;
            if let Some(path) = transcript {
                eprintln!("transcript: {}", path.display());
            }
            println!("{}", summary.to_json());
            Ok(())
        }
        Command::Replay { transcript } => {
            let summary = replay_transcript(&transcript)?;
            println!("{}", summary.to_json());
            Ok(())
        }
        Command::Report {
            summaries,
            baseline,
            format,
            out,
        } => {
            let format: ReportFormat = format.parse().map_err(anyhow::Error::msg)?;
            let mut rows = Vec::new();
            for path in &summaries {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                rows.push(ExperimentSummary::from_json(&text)?);
            }
            let report = emit_report(&rows, baseline.as_deref(), format)?;
            match out {
                Some(path) => std::fs::write(&path, report)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{report}"),
            }
            Ok(())
        }
        Command::Simulate {
            profile,
            tasks,
            seed,
        } => {
            let text = std::fs::read_to_string(&profile)
                .with_context(|| format!("reading {}", profile.display()))?;
            let profile: selfcontrast::SimulatorProfile =
                toml::from_str(&text).context("parsing profile TOML")?;
            let report = run_mechanism_comparison(&profile, tasks, seed)?;
            println!("{}", report.to_json());
            Ok(())
        }
    }
}
