use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use estrack::presets::{self, PRESETS};
use estrack::{parse_config, run_experiment, ExitStatus, ExperimentConfig, Mode};

#[derive(Parser)]
#[command(
    name = "estrack",
    version,
    about = "Extremum seeking tracking experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a config and run its checks.
    Run {
        /// Config file, or `preset:NAME` for a shipped preset.
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// List the shipped presets.
    Presets,
    /// Run the checks of a config without the main simulation.
    Verify {
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn load(arg: &str) -> Result<ExperimentConfig, String> {
    if let Some(name) = arg.strip_prefix("preset:") {
        return match presets::load(name) {
            Some(r) => r.map_err(|e| e.to_string()),
            None => Err(format!("unknown preset '{name}' (see `estrack presets`)")),
        };
    }
    let text = fs::read_to_string(arg).map_err(|e| format!("{arg}: {e}"))?;
    parse_config(&text).map_err(|e| format!("{arg}: {e}"))
}

fn execute(config: &str, out: Option<PathBuf>, quiet: bool, mode: Mode) -> ExitCode {
    let cfg = match load(config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(ExitStatus::ParseError.code() as u8);
        }
    };
    let out_dir = out.unwrap_or_else(|| cfg.outputs.clone());
    let outcome = match run_experiment(&cfg, &out_dir, mode) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {}: {e}", out_dir.display());
            return ExitCode::from(ExitStatus::SimulationError.code() as u8);
        }
    };
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
    }
    if !quiet {
        for c in &outcome.checks {
            println!("{:<20} {}", c.kind, if c.passed { "pass" } else { "FAIL" });
        }
        for p in &outcome.written {
            println!("wrote {}", p.display());
        }
    }
    ExitCode::from(outcome.status.code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, quiet } => execute(&config, out, quiet, Mode::Run),
        Command::Verify { config, out, quiet } => execute(&config, out, quiet, Mode::Verify),
        Command::Presets => {
            for p in PRESETS {
                println!("{:<38} {}", p.name, p.summary);
            }
            ExitCode::SUCCESS
        }
    }
}
