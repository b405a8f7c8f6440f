use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qballot::runner::{emit_report, execute, parse_scenario, BackendChoice, Command, Format};
use qballot::Error;

/// Simulates anonymous quantum voting scenarios and attacks on them.
///
/// Exit codes: 0 success, 1 invalid scenario, 2 an invariant failed,
/// 3 a resource budget was exceeded.
#[derive(Parser)]
#[command(name = "qballot", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the scenario and its attack block, if any.
    Run(Opts),
    /// Run the invariant suite for the scenario.
    Verify(Opts),
    /// Enumerate every vote vector of the scenario's size.
    Sweep(Opts),
    /// Run the scenario's attack block.
    Attack(Opts),
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Text,
    JsonLines,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Dense,
    Branch,
    Both,
}

#[derive(clap::Args)]
struct Opts {
    /// Scenario file.
    scenario: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario backend.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Override the number of trials.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutFormat,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BudgetExceeded { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Sub::Run(o) => (Command::Run, o),
        Sub::Verify(o) => (Command::Verify, o),
        Sub::Sweep(o) => (Command::Sweep, o),
        Sub::Attack(o) => (Command::Attack, o),
    };
    let text = match fs::read_to_string(&opts.scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", opts.scenario.display());
            return ExitCode::from(1);
        }
    };
    let mut config = match parse_scenario(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", opts.scenario.display());
            return ExitCode::from(exit_code(&e));
        }
    };
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(trials) = opts.trials {
        config.trials = trials;
    }
    if let Some(b) = opts.backend {
        config.backend = match b {
            BackendArg::Dense => BackendChoice::Dense,
            BackendArg::Branch => BackendChoice::Branch,
            BackendArg::Both => BackendChoice::Both,
        };
    }
    let report = match execute(&config, command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let format = match opts.format {
        OutFormat::Text => Format::Text,
        OutFormat::JsonLines => Format::JsonLines,
    };
    let bytes = match emit_report(&report, format) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let written = match &opts.out {
        Some(path) => fs::write(path, &bytes),
        None => std::io::stdout().write_all(&bytes),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(1);
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        for c in report.summary.invariants.iter().filter(|c| !c.passed) {
            eprintln!("invariant failed: {}: {}", c.name, c.detail);
        }
        ExitCode::from(2)
    }
}
