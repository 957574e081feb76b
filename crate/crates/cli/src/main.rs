use anyhow::Result;
use clap::{Parser, Subcommand};
use dotlab_cli::commands;
use dotlab_cli::config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Diffuse optical tomography laboratory.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set grid.N=16`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write coefficient and potential fields of both phantoms.
    Phantom,
    /// Write potentials and DtN matrices at every k.
    Forward,
    /// Write DtN gaps and data proxies at every k.
    Dtn,
    /// Solve for CGO solutions at the configured mode.
    Cgo,
    /// Recover Q2 - Q1 at the first k.
    Recover,
    /// Frequency sweep with envelope fit.
    Sweep,
    /// Oracle and invariant suite.
    Check,
    /// Evaluate the stability envelope.
    Bound,
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Phantom => commands::cmd_phantom(&cfg),
        Command::Forward => commands::cmd_forward(&cfg),
        Command::Dtn => commands::cmd_dtn(&cfg),
        Command::Cgo => commands::cmd_cgo(&cfg),
        Command::Recover => commands::cmd_recover(&cfg),
        Command::Sweep => commands::cmd_sweep(&cfg),
        Command::Check => commands::cmd_check(&cfg),
        Command::Bound => commands::cmd_bound(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("DOTLAB_THREADS") {
        match n.parse::<usize>() {
            Ok(n) => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            Err(_) => eprintln!("ignoring DOTLAB_THREADS={n}: not a number"),
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("completed with failures");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
