//! `ape`: run experiments, ablations, metric evaluation, reports and
//! ratings aggregation from the command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 learner protocol error,
//! 4 data error.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use ape_core::{Error, ErrorKind, RunAborted};

use crate::commands::EmbeddingFiles;
use crate::config::CliConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Aborted(#[from] RunAborted),
}

impl CliError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Aborted(a) => a.source.kind(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Protocol => 3,
            ErrorKind::Data => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ape", version, about = "Accept-if-improved iterative fine-tuning harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the same experiment once per batch size.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        delta_d: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score hypothesis summaries against references.
    Eval {
        #[arg(long)]
        hyps: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        /// Token embeddings of the hypotheses; enables BERTScore.
        #[arg(long, requires = "ref_embeddings")]
        embeddings: Option<PathBuf>,
        /// Token embeddings of the references.
        #[arg(long, requires = "embeddings")]
        ref_embeddings: Option<PathBuf>,
        /// Print `mean ± std` rows instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// Rebuild report.json and series_normalized.csv for a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Aggregate human ratings.
    Ratings {
        #[arg(long)]
        csv: PathBuf,
        /// Directory for ratings_summary.json and ratings_summary.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<CliConfig, CliError> {
    let mut config = CliConfig::load(path)?;
    if let Some(seed) = seed {
        config.run.seed = seed;
    }
    Ok(config)
}

/// Runs a parsed command, writing its result to `stdout`.
pub fn execute(command: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    let value = match command {
        Command::Run { config, out, seed } => {
            let config = load_config(&config, seed)?;
            let outcome = commands::run_experiment(&config, &out)?;
            json!({
                "run_dir": outcome.dir,
                "iterations": outcome.record.iterations.len(),
                "accepted": outcome.record.accepted_count,
                "baseline_s": outcome.record.baseline.s_value,
                "final_s": outcome.record.final_state.s_value,
                "metrics": outcome.report.metrics,
            })
        }
        Command::Ablate {
            config,
            delta_d,
            out,
            seed,
        } => {
            let config = load_config(&config, seed)?;
            json!(commands::ablate(&config, &delta_d, &out)?)
        }
        Command::Eval {
            hyps,
            refs,
            embeddings,
            ref_embeddings,
            table,
        } => {
            let files = embeddings.zip(ref_embeddings).map(|(h, r)| EmbeddingFiles {
                hypotheses: h,
                references: r,
            });
            let snapshot = commands::eval(&hyps, &refs, files.as_ref())?;
            if table {
                write!(stdout, "{}", commands::format_snapshot(&snapshot)).map_err(Error::from)?;
                return Ok(());
            }
            json!(snapshot)
        }
        Command::Report { run } => json!(commands::report(&run)?),
        Command::Ratings { csv, out } => json!(commands::ratings(&csv, out.as_deref())?),
    };
    let text = serde_json::to_string_pretty(&value).map_err(Error::from)?;
    writeln!(stdout, "{text}").map_err(Error::from)?;
    Ok(())
}

/// Entry point shared by the binary and the tests.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                // RunAborted and ExampleMetric already embed their cause
                if !e.to_string().contains(&s.to_string()) {
                    eprintln!("  caused by: {s}");
                }
                source = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
