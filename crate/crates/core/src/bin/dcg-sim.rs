use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use dcg_core::cli_runner::{run, run_preset, Outcome, RunOptions, Target};
use dcg_core::config::{parse_config, parse_config_for_preset, SimConfig};

/// Exact and stochastic simulation of measured spin-j dynamics.
#[derive(Debug, Parser)]
#[command(name = "dcg-sim", version)]
struct Cli {
    /// Mode (exact, stochastic, compare, classicality, timescales) or
    /// preset (fig1, fig2, linear, classicality).
    target: String,

    /// Configuration file; required for modes, optional overrides for presets.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed of the noise streams.
    #[arg(long)]
    seed: Option<u64>,

    /// Number of trajectories.
    #[arg(long = "n-traj")]
    n_traj: Option<usize>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads; 0 uses one per core.
    #[arg(long, env = "DCG_SIM_THREADS")]
    threads: Option<usize>,

    /// Write one CSV per trajectory.
    #[arg(long)]
    emit_trajectories: bool,
}

fn load(cli: &Cli, target: Target) -> Result<SimConfig> {
    let text = match &cli.config {
        Some(path) => Some(
            fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?,
        ),
        None => None,
    };
    let mut config = match (target, text) {
        (Target::Mode(mode), Some(text)) => {
            let mut config = parse_config(&text)?;
            config.mode = mode;
            config
        }
        (Target::Mode(mode), None) => anyhow::bail!("mode `{mode}` needs --config"),
        (Target::Preset(preset), Some(text)) => parse_config_for_preset(&text, preset.name())?,
        (Target::Preset(preset), None) => preset.config(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(n) = cli.n_traj {
        config.n_traj = n;
    }
    if let Some(out) = &cli.out {
        config.output = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let target = Target::resolve(&cli.target, cli.config.is_some())?;
    let config = load(cli, target)?;
    let options = RunOptions {
        emit_trajectories: cli.emit_trajectories,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .context("cannot start worker threads")?;
    let outcome = pool.install(|| match target {
        Target::Mode(_) => run(&config, &options),
        Target::Preset(preset) => run_preset(preset, &config, &options),
    })?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => {
            for file in &outcome.files {
                println!("{}", file.display());
            }
            match outcome.passed {
                Some(false) => {
                    eprintln!("dcg-sim: check failed");
                    ExitCode::from(2)
                }
                _ => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("dcg-sim: {e:#}");
            ExitCode::FAILURE
        }
    }
}
