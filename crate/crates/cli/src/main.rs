mod commands;
mod config;
mod network;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use transit_predopt::data::{parse_lag, Lag};
use transit_predopt::qr::MODEL_SCHEMA_VERSION;

use config::PipelineConfig;

/// Forecast OD demand, sample joint scenarios and design bus routes.
#[derive(Debug, Parser)]
#[command(name = "predopt", disable_version_flag = true)]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sampling, solving and fitting.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,
    /// OD count CSV.
    #[arg(long, global = true)]
    counts: Option<PathBuf>,
    /// Network instance JSON.
    #[arg(long, global = true)]
    network: Option<PathBuf>,
    /// Samples per lag.
    #[arg(short, long, global = true)]
    k: Option<usize>,
    /// Print the program and file schema versions.
    #[arg(short = 'V', long)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic OD counts.
    Synth {
        /// Output CSV instead of the configured counts path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the configured models and the copula correlation.
    Train,
    /// Forecast every test lag with the trained models.
    Predict,
    /// Score the forecasts against the observed counts.
    Evaluate,
    /// Sample, solve and aggregate route designs for the given lags.
    Optimize {
        /// Lag as YYYY-MM-DDTHH; repeatable.
        #[arg(long = "lag")]
        lags: Vec<String>,
        /// Only this model.
        #[arg(long)]
        model: Option<String>,
    },
    /// Train if needed, predict, evaluate and compare strategies.
    Pipeline,
}

fn version_text() -> String {
    format!(
        "predopt {}\nmodel schema {MODEL_SCHEMA_VERSION}\nforecast csv: timestamp,origin,destination,q,value\ncounts csv: timestamp,origin,destination,count",
        env!("CARGO_PKG_VERSION")
    )
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(d) = &cli.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(c) = &cli.counts {
        cfg.data.counts = c.clone();
    }
    if let Some(n) = &cli.network {
        cfg.data.network = Some(n.clone());
    }
    if let Some(k) = cli.k {
        cfg.optimize.k = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if cli.version {
        println!("{}", version_text());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        bail!("no command given; see --help");
    };
    let cfg = load_config(&cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match command {
        Command::Synth { out } => commands::synth(&cfg, out.as_deref()),
        Command::Train => commands::train(&cfg),
        Command::Predict => commands::predict(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Optimize { lags, model } => {
            let parsed: Vec<Lag> = lags
                .iter()
                .map(|l| parse_lag(l).ok_or_else(|| anyhow::anyhow!("bad --lag {l:?}")))
                .collect::<Result<_>>()?;
            let lags = (!parsed.is_empty()).then_some(parsed.as_slice());
            commands::optimize(&cfg, lags, model.as_deref())
        }
        Command::Pipeline => commands::pipeline(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
