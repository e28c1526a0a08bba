//! Command-line front end: `els run|sweep|verify|analyze --config <path>`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use els_core::commands::{cmd_analyze, cmd_run, cmd_sweep, cmd_verify, Outcome, Status};
use els_core::config::parse_config;
use els_core::ElsError;

#[derive(Parser)]
#[command(
    name = "els",
    version,
    about = "Radial Ericksen-Leslie Poiseuille-flow solver and diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration document.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for noise fixtures.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write snapshots and diagnostics.
    Run(Common),
    /// Run every point of the `sweep` section in parallel.
    Sweep(Common),
    /// Run and check every invariant, printing a pass/fail table.
    Verify(Common),
    /// Detect concentration and fit rescaled profiles.
    Analyze(Common),
}

fn dispatch(cli: Cli) -> Result<Outcome, ElsError> {
    let (common, kind) = match &cli.command {
        Command::Run(c) => (c, "run"),
        Command::Sweep(c) => (c, "sweep"),
        Command::Verify(c) => (c, "verify"),
        Command::Analyze(c) => (c, "analyze"),
    };
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| ElsError::Io(format!("cannot read {}: {e}", common.config.display())))?;
    let mut config = parse_config(&text)?;
    if let Some(out) = &common.out {
        config.output.directory = out.clone();
    }
    let out = config.output.directory.clone();
    match kind {
        "run" => cmd_run(&config, &out),
        "sweep" => cmd_sweep(&config, &out),
        "verify" => cmd_verify(&config, &out),
        _ => cmd_analyze(&config, &out, common.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            ExitCode::from(outcome.status.code() as u8)
        }
        Err(e) => {
            eprintln!("els: {e}");
            ExitCode::from(Status::of_error(&e).code() as u8)
        }
    }
}
