//! Relays started by the scenario: in-process threads or child processes.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::relay::{serve, FaultMode, NetworkDriver, RelayConfig, RelayHandle};

use super::ScenarioError;

pub enum RelayInstance {
    InProcess(RelayHandle),
    Process { child: Child, addr: String, wire_log: PathBuf },
}

impl RelayInstance {
    pub fn addr(&self) -> String {
        match self {
            RelayInstance::InProcess(h) => h.local_addr().to_string(),
            RelayInstance::Process { addr, .. } => addr.clone(),
        }
    }

    /// Every byte the relay saw on its sockets so far.
    pub fn wire_bytes(&self) -> Vec<u8> {
        match self {
            RelayInstance::InProcess(h) => h.wire_transcript(),
            RelayInstance::Process { wire_log, .. } => std::fs::read(wire_log).unwrap_or_default(),
        }
    }

    pub fn log_lines(&self) -> Vec<String> {
        match self {
            RelayInstance::InProcess(h) => h.log_lines(),
            RelayInstance::Process { .. } => Vec::new(),
        }
    }
}

impl Drop for RelayInstance {
    fn drop(&mut self) {
        if let RelayInstance::Process { child, .. } = self {
            // Closing stdin asks the relay to stop.
            drop(child.stdin.take());
            let until = Instant::now() + Duration::from_secs(3);
            while Instant::now() < until {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                std::thread::sleep(Duration::from_millis(20));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// What to start and how.
pub struct RelayLaunch<'a> {
    pub name: &'a str,
    pub network_id: &'a str,
    pub registry_path: &'a Path,
    pub fault: FaultMode,
    pub deadline: Duration,
    /// Driver for the local network, when this relay serves one.
    pub driver: Option<Arc<dyn NetworkDriver>>,
    /// Address of a driver endpoint, used instead of `driver` by child
    /// processes.
    pub driver_endpoint: Option<String>,
    pub work_dir: &'a Path,
}

pub fn start_in_process(launch: RelayLaunch<'_>) -> Result<RelayInstance, ScenarioError> {
    let mut config = RelayConfig::new(launch.network_id, "127.0.0.1:0", launch.registry_path)
        .with_fault(launch.fault)
        .with_deadline(launch.deadline);
    if let Some(driver) = launch.driver {
        config = config.with_driver(launch.network_id, driver);
    }
    Ok(RelayInstance::InProcess(serve(config)?))
}

pub fn start_process(binary: &Path, launch: RelayLaunch<'_>) -> Result<RelayInstance, ScenarioError> {
    let wire_log = launch.work_dir.join(format!("{}.wire", launch.name));
    let mut cmd = Command::new(binary);
    cmd.arg("--network")
        .arg(launch.network_id)
        .arg("--listen")
        .arg("127.0.0.1:0")
        .arg("--registry")
        .arg(launch.registry_path)
        .arg("--fault")
        .arg(launch.fault.as_str())
        .arg("--deadline-ms")
        .arg(launch.deadline.as_millis().to_string())
        .arg("--wire-log")
        .arg(&wire_log)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit());
    if let Some(endpoint) = &launch.driver_endpoint {
        cmd.arg("--driver").arg(format!("{}={endpoint}", launch.network_id));
    }
    let mut child = cmd
        .spawn()
        .map_err(|e| ScenarioError::Setup(format!("spawn {}: {e}", binary.display())))?;
    let stdout = child.stdout.take().expect("stdout piped");
    let mut first = String::new();
    BufReader::new(stdout)
        .read_line(&mut first)
        .map_err(|e| ScenarioError::Setup(format!("relay {}: {e}", launch.name)))?;
    let addr = first
        .trim()
        .strip_prefix("listening ")
        .ok_or_else(|| ScenarioError::Setup(format!("relay {} did not start: {first:?}", launch.name)))?
        .to_string();
    Ok(RelayInstance::Process { child, addr, wire_log })
}
