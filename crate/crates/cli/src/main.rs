//! `collapse-lab`: train small fixed-width networks and measure per-layer
//! neural collapse, effective depth, and the comparative generalization
//! bound, with deterministic CSV/JSON/SVG artifacts.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use collapse_cli::{commands, config, CliError};
use collapse_core::exec;

#[derive(Parser)]
#[command(
    name = "collapse-lab",
    version,
    about = "Per-layer neural collapse experiments with deterministic artifacts"
)]
struct Cli {
    /// JSON experiment config; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Dotted config override, e.g. --set sgd.epochs=50 (repeatable).
    #[arg(long = "set", global = true, value_name = "K=V")]
    set: Vec<String>,

    /// Output directory (defaults to the config's out_dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the config's master seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Cap the worker pool for sweeps and per-layer metrics.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Train one network, writing checkpoints and the train log.
    Train,
    /// Train one network and record collapse snapshots over epochs.
    Report,
    /// One full train+report per depth in `depths`, per seed.
    DepthSweep,
    /// One full train+report per noise fraction, per seed.
    NoiseSweep,
    /// Estimate the comparative generalization bound from k disjoint pairs.
    Bound,
    /// Train once, then fit a linear probe on every layer's features.
    Probe,
    /// Re-render SVG figures from the summary CSVs in the output directory.
    Plot,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        exec::set_jobs(jobs);
    }
    let (cfg, canonical) = config::load_config(cli.config.as_deref(), &cli.set, cli.seed)?;
    let mut out = cli.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    if matches!(cli.command, Cmd::Probe) {
        if let Ok(dir) = std::env::var("NC_PROBE_OUT") {
            if !dir.is_empty() {
                out = PathBuf::from(dir);
            }
        }
    }
    match cli.command {
        Cmd::Train => commands::cmd_train(&cfg, &canonical, &out),
        Cmd::Report => commands::cmd_report(&cfg, &canonical, &out),
        Cmd::DepthSweep => commands::cmd_depth_sweep(&cfg, &canonical, &out),
        Cmd::NoiseSweep => commands::cmd_noise_sweep(&cfg, &canonical, &out),
        Cmd::Bound => commands::cmd_bound(&cfg, &canonical, &out),
        Cmd::Probe => commands::cmd_probe(&cfg, &canonical, &out),
        Cmd::Plot => commands::cmd_plot(&cfg, &canonical, &out),
    }
}
