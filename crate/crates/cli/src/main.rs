use std::path::PathBuf;
use std::process::ExitCode;

use aojc_cli::commands::{evaluate, fig4, optimize, simulate, stability, verify};
use aojc_cli::{CliError, Context, LoadedConfig, Outcome};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aojc", version, about = "Age of job completion: closed forms, simulation and policy design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true, env = "AOJC_SEED")]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Closed-form ages and sampling costs for the listed cases.
    Evaluate,
    /// Monte Carlo runs of one system under one policy table.
    Simulate,
    /// Optimal policy tables.
    Optimize,
    /// Closed forms against saturated-mode simulation.
    Verify,
    /// Policy comparison over a sweep of flip probabilities.
    Fig4,
    /// Sufficient stability conditions against drift diagnostics.
    Stability,
}

fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| aojc_cli::error::config_err("--config is required"))?;
    let cfg = LoadedConfig::from_path(path)?;
    let ctx = Context::new(cfg, cli.seed, cli.out.clone());
    std::fs::create_dir_all(&ctx.out_dir)?;
    let run = || match cli.command {
        Command::Evaluate => evaluate::run(&ctx),
        Command::Simulate => simulate::run(&ctx),
        Command::Optimize => optimize::run(&ctx),
        Command::Verify => verify::run(&ctx),
        Command::Fig4 => fig4::run(&ctx),
        Command::Stability => stability::run(&ctx),
    };
    match cli.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| aojc_cli::error::config_err(format!("cannot start {k} workers: {e}")))?
            .install(run),
        None => run(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(out) => {
            for f in &out.files {
                println!("{}", f.display());
            }
            for n in &out.notes {
                eprintln!("note: {n}");
            }
            for f in &out.failures {
                eprintln!("FAIL: {f}");
            }
            if out.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
