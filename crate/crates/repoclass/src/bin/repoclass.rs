//! Pipeline CLI: each subcommand runs one stage over the work directory;
//! `e2e` chains them all. One TOML config governs every stage; `--seed`,
//! `--workdir` and `--deterministic` override it from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use repoclass::config::PipelineConfig;
use repoclass::eval::EvalReport;
use repoclass::fetch::{read_slugs, FetchSpec, DEFAULT_CONCURRENCY, DEFAULT_RPM};
use repoclass::pipeline::Pipeline;
use repoclass::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Keyword-driven hierarchical classification of repository records")]
struct Cli {
    /// Pipeline configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override the configured work directory.
    #[arg(long, global = true, value_name = "DIR")]
    workdir: Option<PathBuf>,

    /// Override the configured global seed everywhere.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Single-threaded embedding training for bit-identical reruns.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Use input artifacts even if they were produced under a different
    /// configuration.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download repository records into the JSONL corpus.
    Fetch {
        /// File of `owner/name` slugs, one per line.
        #[arg(long, value_name = "FILE")]
        slugs: PathBuf,
        /// Output corpus (defaults to the configured corpus path).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Environment variable holding the API token.
        #[arg(long, value_name = "VAR")]
        token_env: Option<String>,
        /// Request budget per 60-second window.
        #[arg(long, default_value_t = DEFAULT_RPM)]
        rpm: u32,
        /// Maximum in-flight requests.
        #[arg(long, default_value_t = DEFAULT_CONCURRENCY)]
        concurrency: usize,
    },
    /// Build the word-centric network from the corpus and hierarchy.
    BuildHin,
    /// Train node embeddings over the network.
    Embed,
    /// Expand each leaf's seed keyword into a keyword set.
    Enrich,
    /// Fit directional topic mixtures for every class.
    FitTopics,
    /// Generate labeled pseudo documents from the topic models.
    Generate,
    /// Train one local classifier per internal node.
    Train,
    /// Predict a label path for every corpus record.
    Predict,
    /// Score predictions against gold labels.
    Evaluate {
        /// Exit nonzero when any scope's micro F1 falls below this.
        #[arg(long)]
        fail_under: Option<f64>,
    },
    /// Run every stage from the corpus to the report.
    E2e {
        /// Exit nonzero when any scope's micro F1 falls below this.
        #[arg(long)]
        fail_under: Option<f64>,
    },
    /// Emit the synthetic planted-topic corpus and hierarchy.
    Synth,
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = &cli.workdir {
        config.workdir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.deterministic {
        config.embedding.workers = 1;
    }
    Ok(config)
}

/// Nonzero exit when any scope misses the threshold.
fn check_fail_under(report: &EvalReport, threshold: Option<f64>) -> Result<()> {
    let Some(threshold) = threshold else {
        return Ok(());
    };
    for (scope, metrics) in &report.scopes {
        if metrics.micro_f1 < threshold {
            return Err(Error::Validation(format!(
                "{scope} micro F1 {:.4} is below --fail-under {threshold}",
                metrics.micro_f1
            )));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = effective_config(&cli)?;
    let pipeline = Pipeline::new(config, cli.force)?;

    match cli.command {
        Command::Fetch {
            slugs,
            out,
            token_env,
            rpm,
            concurrency,
        } => {
            let token = match token_env {
                Some(var) => Some(std::env::var(&var).map_err(|_| {
                    Error::Config(format!("token environment variable {var} is not set"))
                })?),
                None => None,
            };
            let spec = FetchSpec {
                slugs: read_slugs(&slugs)?,
                token,
                rpm,
                out: out.unwrap_or_else(|| pipeline.config.corpus.clone()),
                concurrency,
            };
            let written = pipeline.run_fetch(&spec)?;
            println!("fetched {written} of {} repositories", spec.slugs.len());
        }
        Command::BuildHin => pipeline.run_build_hin()?,
        Command::Embed => pipeline.run_embed()?,
        Command::Enrich => pipeline.run_enrich()?,
        Command::FitTopics => pipeline.run_fit_topics()?,
        Command::Generate => pipeline.run_generate()?,
        Command::Train => pipeline.run_train()?,
        Command::Predict => pipeline.run_predict()?,
        Command::Evaluate { fail_under } => {
            let report = pipeline.run_evaluate()?;
            print!("{}", report.format_table());
            check_fail_under(&report, fail_under.or(pipeline.config.evaluation.fail_under))?;
        }
        Command::E2e { fail_under } => {
            let report = pipeline.run_e2e()?;
            print!("{}", report.format_table());
            check_fail_under(&report, fail_under.or(pipeline.config.evaluation.fail_under))?;
        }
        Command::Synth => pipeline.run_synth()?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
