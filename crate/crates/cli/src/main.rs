//! `edsa`: event detection and sentiment voting over tweet corpora.

mod bundle;
mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use edsa_core::classifiers::ModelKind;
use edsa_core::events::EventMethod;
use edsa_core::PipelineKind;

use crate::commands::Ctx;
use crate::config::Config;
use crate::error::{CliError, Result};
use crate::output::{Artifact, Manifest};

#[derive(Debug, Parser)]
#[command(name = "edsa", version, about = "Detect events in tweets and vote on their sentiment")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the dataset and write it as newline-delimited JSON.
    Ingest,
    /// Run a text pipeline and write the token streams.
    Preprocess,
    /// Build the vocabulary and document-term matrix (and CBOW vectors).
    Vectorize,
    /// Detect bursty events with each selected method.
    DetectEvents,
    /// Train sentiment models on the labelled dataset.
    Train,
    /// Cross-validate sentiment models and write the metric table.
    Evaluate,
    /// Detect events and label each tweet and event by majority vote.
    Ensemble,
    /// Summarize the artifacts in the output directory.
    Report,
}

/// Flags take precedence over the config file.
#[derive(Debug, Args)]
struct Flags {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// c1, c2, c3, or a path to a Sentiment140 CSV or NDJSON dump.
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// mt, pt, ct, sct or sfe.
    #[arg(long, global = true)]
    pipeline: Option<PipelineKind>,
    /// Event methods, comma separated (mabed, olda, peaky) or `all`.
    #[arg(long, global = true, value_delimiter = ',')]
    method: Option<Vec<String>>,
    /// Models, comma separated: nb, lr, ridge, svm, softmax, lstm, lexicon,
    /// hash:<salt>, or `all`.
    #[arg(long, global = true, value_delimiter = ',')]
    model: Option<Vec<String>>,
    /// Events kept per method.
    #[arg(long, global = true)]
    top: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Preprocess => "preprocess",
            Command::Vectorize => "vectorize",
            Command::DetectEvents => "detect-events",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Ensemble => "ensemble",
            Command::Report => "report",
        }
    }
}

fn apply_flags(mut cfg: Config, f: &Flags) -> Result<Config> {
    if let Some(s) = f.seed {
        cfg.seed = s;
    }
    if let Some(t) = f.threads {
        cfg.threads = t;
    }
    if let Some(d) = &f.dataset {
        cfg.dataset = d.clone();
    }
    if let Some(p) = f.pipeline {
        cfg.preprocess.pipeline = p;
        cfg.train.pipeline = p;
    }
    if let Some(methods) = &f.method {
        cfg.ensemble.methods = if methods.iter().any(|m| m == "all") {
            EventMethod::ALL.to_vec()
        } else {
            methods
                .iter()
                .map(|m| m.parse().map_err(|e: edsa_core::Error| CliError::Usage(e.to_string())))
                .collect::<Result<_>>()?
        };
    }
    if let Some(models) = &f.model {
        let names: Vec<String> = if models.iter().any(|m| m == "all") {
            ModelKind::ALL.iter().map(|k| k.as_str().to_string()).collect()
        } else {
            models.clone()
        };
        // Learned models also select what `evaluate` cross-validates.
        let kinds: Vec<ModelKind> = names.iter().filter_map(|n| n.parse().ok()).collect();
        if !kinds.is_empty() {
            cfg.evaluate.models = kinds;
        }
        cfg.ensemble.models = names;
    }
    if let Some(k) = f.top {
        cfg.detect.top_k = k;
    }
    if let Some(o) = &f.out {
        cfg.paths.report_dir = Some(o.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    let base = match &cli.flags.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let cfg = apply_flags(base, &cli.flags)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let ctx = Ctx::new(cfg);
    let files = match cli.command {
        Command::Ingest => commands::ingest(&ctx)?,
        Command::Preprocess => commands::preprocess(&ctx)?,
        Command::Vectorize => commands::vectorize(&ctx)?,
        Command::DetectEvents => commands::detect_events(&ctx)?,
        Command::Train => commands::train(&ctx)?,
        Command::Evaluate => commands::evaluate(&ctx)?,
        Command::Ensemble => commands::ensemble(&ctx)?,
        Command::Report => commands::report(&ctx)?,
    };
    let manifest = Manifest {
        command: cli.command.name().to_string(),
        config_hash: ctx.hash.clone(),
        seed: ctx.config.seed,
        threads: rayon::current_num_threads(),
        versions: output::versions(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        artifacts: files.iter().map(|p| Artifact::of(p)).collect::<Result<_>>()?,
    };
    let path = ctx.out.join(format!("{}.manifest.json", cli.command.name()));
    output::write_json(&path, &manifest)?;
    for f in &files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .map(str::trim)
                .find(|l| !l.is_empty())
                .unwrap_or("bad arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()).line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::FAILURE
        }
    }
}
