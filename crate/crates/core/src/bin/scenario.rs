//! Runs the trade use case and its attack variants.
//!
//! Exit status is 0 iff every verdict the chosen run expects was reached.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use interop_core::scenario::{Attack, Environment, ScenarioSpec};

#[derive(Parser)]
#[command(name = "scenario", about = "Cross-network trade scenario with proofs of remote state")]
struct Cli {
    /// Seed for every key, request id and nonce.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Write the line-delimited JSON transcript here instead of stdout.
    #[arg(long, global = true)]
    transcript: Option<PathBuf>,
    /// Deadline for forwarded requests, in milliseconds.
    #[arg(long, global = true, default_value_t = 10_000)]
    deadline_ms: u64,
    /// Run the relays as separate processes.
    #[arg(long, global = true)]
    multiprocess: bool,
    /// Relay executable for --multiprocess; defaults to `relay` next to this binary.
    #[arg(long, global = true)]
    relay_bin: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build both networks, start relays and commit the setup transactions.
    Setup,
    /// Run the trade flow, optionally under attack.
    Run {
        #[arg(long, default_value = "none", value_parser = parse_attack)]
        attack: Attack,
    },
    /// Run the trade flow, then print one network's ledger dump.
    Inspect {
        network: String,
        #[arg(long, default_value = "none", value_parser = parse_attack)]
        attack: Attack,
    },
}

fn parse_attack(s: &str) -> Result<Attack, String> {
    s.parse()
}

fn emit(cli: &Cli, text: &str) -> std::io::Result<()> {
    match &cli.transcript {
        Some(path) => std::fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("scenario: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<bool, Box<dyn std::error::Error>> {
    let relay_binary = if cli.multiprocess {
        Some(match &cli.relay_bin {
            Some(p) => p.clone(),
            None => std::env::current_exe()?.with_file_name(format!("relay{}", std::env::consts::EXE_SUFFIX)),
        })
    } else {
        None
    };
    let attack = match &cli.command {
        Command::Setup => Attack::None,
        Command::Run { attack } | Command::Inspect { attack, .. } => *attack,
    };
    let spec = ScenarioSpec { seed: cli.seed, attack, deadline: Duration::from_millis(cli.deadline_ms), relay_binary };
    let mut env = Environment::setup(spec)?;
    match &cli.command {
        Command::Setup => {
            emit(cli, &env.transcript().to_jsonl())?;
            Ok(env.setup_commits() == 7)
        }
        Command::Run { .. } => {
            let transcript = env.run()?;
            emit(cli, &transcript.to_jsonl())?;
            Ok(transcript.expected_reached)
        }
        Command::Inspect { network, .. } => {
            env.network(network)?;
            let transcript = env.run()?;
            if let Some(path) = &cli.transcript {
                std::fs::write(path, transcript.to_jsonl())?;
            }
            let dump = env.inspect(network)?;
            print!("{dump}");
            Ok(dump.ends_with("verify_chain true\n"))
        }
    }
}
