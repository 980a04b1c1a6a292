//! Standalone relay. Prints `listening <addr>` once bound and runs until
//! stdin reaches end of file.

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;

use interop_core::relay::{serve, FaultMode, RelayConfig, RelayFileConfig, TcpDriver};

#[derive(Parser)]
#[command(name = "relay", about = "Relay for cross-network queries")]
struct Cli {
    /// TOML configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network this relay acts for.
    #[arg(long)]
    network: Option<String>,
    #[arg(long)]
    listen: Option<String>,
    /// Discovery registry file.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// none, tamper_result, replay_response or drop_requests.
    #[arg(long)]
    fault: Option<FaultMode>,
    #[arg(long)]
    deadline_ms: Option<u64>,
    /// Driver endpoint for a local network, as NETWORK=HOST:PORT. Repeatable.
    #[arg(long = "driver")]
    drivers: Vec<String>,
    /// Append every byte seen on the relay's sockets to this file.
    #[arg(long)]
    wire_log: Option<PathBuf>,
    /// Print structured log lines.
    #[arg(long)]
    verbose: bool,
}

fn build_config(cli: Cli) -> Result<RelayConfig, String> {
    let mut config = match &cli.config {
        Some(path) => RelayFileConfig::load(path)
            .and_then(RelayFileConfig::into_config)
            .map_err(|e| e.to_string())?,
        None => {
            let network = cli.network.clone().ok_or("--network or --config is required")?;
            let registry = cli.registry.clone().ok_or("--registry or --config is required")?;
            RelayConfig::new(&network, "127.0.0.1:0", registry)
        }
    };
    if let Some(network) = cli.network {
        config.local_network_id = network;
    }
    if let Some(listen) = cli.listen {
        config.listen_address = listen;
    }
    if let Some(registry) = cli.registry {
        config.registry_path = registry;
    }
    if let Some(fault) = cli.fault {
        config.fault_mode = fault;
    }
    if let Some(ms) = cli.deadline_ms {
        config.deadline = Duration::from_millis(ms);
    }
    let deadline = config.deadline;
    for binding in cli.drivers {
        let (network, addr) = binding.split_once('=').ok_or_else(|| format!("bad --driver {binding:?}"))?;
        config = config.with_driver(network, Arc::new(TcpDriver::new(addr, deadline)));
    }
    if cli.wire_log.is_some() {
        config.wire_log = cli.wire_log;
    }
    config.echo_log = cli.verbose;
    Ok(config)
}

fn main() -> ExitCode {
    let config = match build_config(Cli::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("relay: {e}");
            return ExitCode::from(2);
        }
    };
    let handle = match serve(config) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("relay: {e}");
            return ExitCode::from(1);
        }
    };
    println!("listening {}", handle.local_addr());
    let mut sink = Vec::new();
    let _ = std::io::stdin().read_to_end(&mut sink);
    handle.shutdown();
    ExitCode::SUCCESS
}
