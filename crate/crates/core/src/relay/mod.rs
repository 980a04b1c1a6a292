//! Per-network relay service.
//!
//! A relay accepts framed [`QueryRequest`]s over TCP. Requests addressed to
//! a network it has a driver for are executed locally (inbound); anything
//! else is looked up in the discovery registry and forwarded to the remote
//! relay (outbound). Relays never hold decryption keys: results and proof
//! metadata pass through sealed.

pub mod driver;
pub mod log;
pub mod registry;
pub mod transport;

use std::collections::BTreeMap;
use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::wire::{decode_payload, encode, FrameBuffer, Message, QueryRequest, QueryResponse, Status};

pub use driver::{DriverError, DriverEvent, NetworkDriver, SimDriver, TcpDriver};
pub use log::{Direction, RelayLog};
pub use registry::{DiscoveryRegistry, RegistryError};

pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(10);
const POLL: Duration = Duration::from_millis(20);
/// Part of the deadline kept back for answering the client, so a timeout
/// reaches it before the deadline has passed.
const REPLY_MARGIN: Duration = Duration::from_millis(100);

#[derive(Debug, Error)]
pub enum RelayError {
    #[error("bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
}

/// Test hook turning the relay malicious.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaultMode {
    #[default]
    None,
    /// Flip a byte of the sealed result in every ok response served.
    TamperResult,
    /// Answer every request with the first ok response ever served,
    /// relabelled with the new request id.
    ReplayResponse,
    /// Read requests and never answer.
    DropRequests,
}

impl FromStr for FaultMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(FaultMode::None),
            "tamper_result" => Ok(FaultMode::TamperResult),
            "replay_response" => Ok(FaultMode::ReplayResponse),
            "drop_requests" => Ok(FaultMode::DropRequests),
            other => Err(format!("unknown fault mode {other:?}")),
        }
    }
}

impl FaultMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultMode::None => "none",
            FaultMode::TamperResult => "tamper_result",
            FaultMode::ReplayResponse => "replay_response",
            FaultMode::DropRequests => "drop_requests",
        }
    }
}

pub struct RelayConfig {
    pub local_network_id: String,
    pub listen_address: String,
    pub registry_path: PathBuf,
    pub driver_bindings: BTreeMap<String, Arc<dyn NetworkDriver>>,
    pub fault_mode: FaultMode,
    /// Deadline for each forwarded request.
    pub deadline: Duration,
    /// Also append every observed byte to this file.
    pub wire_log: Option<PathBuf>,
    /// Print log lines to stdout.
    pub echo_log: bool,
}

impl RelayConfig {
    pub fn new(local_network_id: &str, listen_address: &str, registry_path: impl Into<PathBuf>) -> Self {
        Self {
            local_network_id: local_network_id.to_string(),
            listen_address: listen_address.to_string(),
            registry_path: registry_path.into(),
            driver_bindings: BTreeMap::new(),
            fault_mode: FaultMode::None,
            deadline: DEFAULT_DEADLINE,
            wire_log: None,
            echo_log: false,
        }
    }

    pub fn with_driver(mut self, network_id: &str, driver: Arc<dyn NetworkDriver>) -> Self {
        self.driver_bindings.insert(network_id.to_string(), driver);
        self
    }

    pub fn with_fault(mut self, fault: FaultMode) -> Self {
        self.fault_mode = fault;
        self
    }

    pub fn with_deadline(mut self, deadline: Duration) -> Self {
        self.deadline = deadline;
        self
    }
}

/// On-disk relay configuration (TOML).
///
/// ```toml
/// local_network_id = "trade-lens"
/// listen_address = "127.0.0.1:9001"
/// registry_path = "registry.txt"
/// fault_mode = "none"
/// deadline_ms = 10000
/// wire_log = "stl-relay.wire"
///
/// [drivers]
/// trade-lens = "127.0.0.1:7001"
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelayFileConfig {
    pub local_network_id: String,
    #[serde(default = "default_listen")]
    pub listen_address: String,
    pub registry_path: PathBuf,
    #[serde(default)]
    pub fault_mode: Option<String>,
    #[serde(default)]
    pub deadline_ms: Option<u64>,
    #[serde(default)]
    pub wire_log: Option<PathBuf>,
    /// network id → driver endpoint address.
    #[serde(default)]
    pub drivers: BTreeMap<String, String>,
}

fn default_listen() -> String {
    "127.0.0.1:0".to_string()
}

impl RelayFileConfig {
    pub fn load(path: &Path) -> Result<Self, RelayError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| RelayError::Config(e.to_string()))?;
        // Relative paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.registry_path.is_relative() {
            cfg.registry_path = base.join(&cfg.registry_path);
        }
        if let Some(w) = cfg.wire_log.as_mut().filter(|w| w.is_relative()) {
            *w = base.join(&*w);
        }
        Ok(cfg)
    }

    pub fn into_config(self) -> Result<RelayConfig, RelayError> {
        let deadline = self.deadline_ms.map_or(DEFAULT_DEADLINE, Duration::from_millis);
        let fault_mode = self
            .fault_mode
            .as_deref()
            .map(FaultMode::from_str)
            .transpose()
            .map_err(RelayError::Config)?
            .unwrap_or_default();
        let mut config = RelayConfig::new(&self.local_network_id, &self.listen_address, self.registry_path)
            .with_fault(fault_mode)
            .with_deadline(deadline);
        for (network, addr) in self.drivers {
            config = config.with_driver(&network, Arc::new(TcpDriver::new(addr, deadline)));
        }
        config.wire_log = self.wire_log;
        Ok(config)
    }
}

/// Shared relay state. Obtain one through [`serve`].
pub struct Relay {
    local_network_id: String,
    registry: DiscoveryRegistry,
    drivers: BTreeMap<String, Arc<dyn NetworkDriver>>,
    fault_mode: FaultMode,
    deadline: Duration,
    log: RelayLog,
    replay_cache: Mutex<Option<QueryResponse>>,
    /// network → (registry generation, index of preferred address)
    preferred: Mutex<BTreeMap<String, (u64, usize)>>,
    shutdown: AtomicBool,
    active: AtomicUsize,
}

impl Relay {
    pub fn local_network_id(&self) -> &str {
        &self.local_network_id
    }

    pub fn log(&self) -> &RelayLog {
        &self.log
    }

    pub fn registry(&self) -> &DiscoveryRegistry {
        &self.registry
    }

    fn forward_budget(&self) -> Duration {
        self.deadline - REPLY_MARGIN.min(self.deadline / 10)
    }

    /// Looks up the destination relay and forwards. Single attempt; on
    /// timeout or unreachable the next registered relay for that network
    /// becomes preferred for later requests.
    pub fn route_outbound(&self, request: &QueryRequest) -> QueryResponse {
        let addrs = match self.registry.lookup(&request.dest_network_id) {
            Ok(a) if !a.is_empty() => a,
            _ => return QueryResponse::denied(request.request_id, "no-route"),
        };
        let generation = self.registry.generation();
        let idx = {
            let mut pref = self.preferred.lock().expect("preference lock poisoned");
            let entry = pref.entry(request.dest_network_id.clone()).or_insert((generation, 0));
            if entry.0 != generation {
                *entry = (generation, 0);
            }
            entry.1 % addrs.len()
        };
        match transport::call(&addrs[idx], request, self.forward_budget(), Some(&self.log)) {
            Ok((response, _)) if response.request_id == request.request_id => response,
            Ok(_) => QueryResponse::error(request.request_id, "mismatched-response"),
            Err(e) => {
                let mut pref = self.preferred.lock().expect("preference lock poisoned");
                if let Some(entry) = pref.get_mut(&request.dest_network_id).filter(|e| e.0 == generation) {
                    entry.1 = idx + 1;
                }
                QueryResponse::error(request.request_id, e.reason())
            }
        }
    }

    /// Executes through the bound driver, then applies the fault mode.
    /// `None` means the request is dropped.
    pub fn handle_inbound(&self, request: &QueryRequest) -> Option<QueryResponse> {
        if self.fault_mode == FaultMode::DropRequests {
            return None;
        }
        let Some(driver) = self.drivers.get(&request.dest_network_id) else {
            return Some(QueryResponse::denied(request.request_id, "unknown-local-network"));
        };
        let response = match driver.execute_query(request) {
            Ok(sealed) if !sealed.attestations.is_empty() => {
                QueryResponse::ok(request.request_id, sealed.encrypted_result, sealed.attestations)
            }
            Ok(_) => QueryResponse::error(request.request_id, "no-attestations"),
            Err(DriverError::Denied(reason)) => QueryResponse::denied(request.request_id, reason),
            Err(DriverError::Failed(reason)) => QueryResponse::error(request.request_id, reason),
        };
        Some(self.apply_fault(request, response))
    }

    fn apply_fault(&self, request: &QueryRequest, mut response: QueryResponse) -> QueryResponse {
        match self.fault_mode {
            FaultMode::TamperResult => {
                if let Some(p) = response.payload.as_mut() {
                    let body = &mut p.encrypted_result.body;
                    let mid = body.len() / 2;
                    body[mid] ^= 0x5a;
                }
                response
            }
            FaultMode::ReplayResponse => {
                let mut cache = self.replay_cache.lock().expect("replay cache poisoned");
                match cache.as_ref() {
                    Some(old) => QueryResponse { request_id: request.request_id, ..old.clone() },
                    None => {
                        if response.status == Status::Ok {
                            *cache = Some(response.clone());
                        }
                        response
                    }
                }
            }
            FaultMode::None | FaultMode::DropRequests => response,
        }
    }

    /// Inbound if this relay serves the destination network, else outbound.
    pub fn dispatch(&self, request: &QueryRequest) -> Option<QueryResponse> {
        if request.dest_network_id == self.local_network_id || self.drivers.contains_key(&request.dest_network_id) {
            self.handle_inbound(request)
        } else if self.fault_mode == FaultMode::DropRequests {
            None
        } else {
            Some(self.route_outbound(request))
        }
    }

    fn serve_connection(&self, mut stream: TcpStream) {
        let _ = stream.set_read_timeout(Some(POLL));
        let _ = stream.set_nodelay(true);
        let mut frames = FrameBuffer::default();
        let mut buf = vec![0u8; 64 * 1024];
        loop {
            match frames.next_frame() {
                Ok(Some(frame)) => {
                    if !self.process_frame(&mut stream, &frame) {
                        break;
                    }
                    continue;
                }
                Ok(None) => {}
                Err(e) => {
                    self.log.line(Direction::Recv, &[], &format!("decode-error:{e}"));
                    break;
                }
            }
            match stream.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    self.log.wire(&buf[..n]);
                    frames.push(&buf[..n]);
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {
                    if self.shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
        let _ = stream.shutdown(std::net::Shutdown::Both);
    }

    /// Returns false when the connection should close.
    fn process_frame(&self, stream: &mut TcpStream, frame: &[u8]) -> bool {
        let request = match decode_payload(&frame[4..]) {
            Ok(Message::Request(r)) => r,
            Ok(Message::Response(r)) => {
                self.log.line(Direction::Recv, &r.request_id, "decode-error:unexpected-response");
                return false;
            }
            Err(e) => {
                self.log.line(Direction::Recv, &[], &format!("decode-error:{e}"));
                return false;
            }
        };
        self.log.line(Direction::Recv, &request.request_id, "request");
        let Some(response) = self.dispatch(&request) else {
            self.log.line(Direction::Recv, &request.request_id, "dropped");
            return true;
        };
        let bytes = encode(&Message::Response(response.clone()));
        self.log.wire(&bytes);
        let status = if response.reason.is_empty() {
            response.status.as_str().to_string()
        } else {
            format!("{}:{}", response.status.as_str(), response.reason)
        };
        self.log.line(Direction::Send, &request.request_id, &status);
        stream.write_all(&bytes).and_then(|_| stream.flush()).is_ok()
    }
}

/// Running relay. Dropping the handle shuts the relay down.
pub struct RelayHandle {
    relay: Arc<Relay>,
    addr: SocketAddr,
    acceptor: Option<JoinHandle<()>>,
    connections: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

impl RelayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn relay(&self) -> &Arc<Relay> {
        &self.relay
    }

    pub fn log_lines(&self) -> Vec<String> {
        self.relay.log.lines()
    }

    pub fn wire_transcript(&self) -> Vec<u8> {
        self.relay.log.wire_bytes()
    }

    pub fn active_connections(&self) -> usize {
        self.relay.active.load(Ordering::SeqCst)
    }

    /// Stops accepting, lets in-flight requests finish, joins every
    /// connection thread.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.relay.shutdown.store(true, Ordering::SeqCst);
        if let Some(acceptor) = self.acceptor.take() {
            let _ = acceptor.join();
        }
        let handles = std::mem::take(&mut *self.connections.lock().expect("connection list poisoned"));
        for h in handles {
            let _ = h.join();
        }
    }
}

impl Drop for RelayHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds and starts serving on a background thread.
pub fn serve(config: RelayConfig) -> Result<RelayHandle, RelayError> {
    let listener = TcpListener::bind(&config.listen_address)
        .map_err(|source| RelayError::Bind { addr: config.listen_address.clone(), source })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let relay = Arc::new(Relay {
        local_network_id: config.local_network_id,
        registry: DiscoveryRegistry::open(config.registry_path)?,
        drivers: config.driver_bindings,
        fault_mode: config.fault_mode,
        deadline: config.deadline,
        log: RelayLog::new(config.wire_log.as_deref(), config.echo_log)?,
        replay_cache: Mutex::new(None),
        preferred: Mutex::new(BTreeMap::new()),
        shutdown: AtomicBool::new(false),
        active: AtomicUsize::new(0),
    });
    let connections: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::default();
    let acceptor = {
        let relay = Arc::clone(&relay);
        let connections = Arc::clone(&connections);
        std::thread::Builder::new()
            .name(format!("relay-{}", relay.local_network_id))
            .spawn(move || accept_loop(listener, relay, connections))?
    };
    Ok(RelayHandle { relay, addr, acceptor: Some(acceptor), connections })
}

fn accept_loop(listener: TcpListener, relay: Arc<Relay>, connections: Arc<Mutex<Vec<JoinHandle<()>>>>) {
    while !relay.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                if stream.set_nonblocking(false).is_err() {
                    continue;
                }
                relay.active.fetch_add(1, Ordering::SeqCst);
                let worker = Arc::clone(&relay);
                let spawned = std::thread::Builder::new().name("relay-conn".into()).spawn(move || {
                    worker.serve_connection(stream);
                    worker.active.fetch_sub(1, Ordering::SeqCst);
                });
                let mut list = connections.lock().expect("connection list poisoned");
                list.retain(|h| !h.is_finished());
                match spawned {
                    Ok(h) => list.push(h),
                    Err(_) => {
                        relay.active.fetch_sub(1, Ordering::SeqCst);
                    }
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(5)),
            Err(_) => std::thread::sleep(Duration::from_millis(5)),
        }
    }
}

/// A relay with only a driver binding: exposes a local ledger to relays
/// running in other processes (see [`TcpDriver`]).
pub fn serve_driver_endpoint(
    network_id: &str,
    listen_address: &str,
    driver: Arc<dyn NetworkDriver>,
    registry_path: impl Into<PathBuf>,
) -> Result<RelayHandle, RelayError> {
    serve(RelayConfig::new(network_id, listen_address, registry_path).with_driver(network_id, driver))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fault_mode_names_round_trip() {
        for m in [FaultMode::None, FaultMode::TamperResult, FaultMode::ReplayResponse, FaultMode::DropRequests] {
            assert_eq!(m.as_str().parse::<FaultMode>().unwrap(), m);
        }
        assert!("chaos".parse::<FaultMode>().is_err());
    }

    #[test]
    fn file_config_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("relay.toml");
        std::fs::write(
            &path,
            "local_network_id = \"we-trade\"\nregistry_path = \"registry.txt\"\nfault_mode = \"drop_requests\"\ndeadline_ms = 250\n[drivers]\nwe-trade = \"127.0.0.1:7000\"\n",
        )
        .unwrap();
        let cfg = RelayFileConfig::load(&path).unwrap();
        assert_eq!(cfg.registry_path, dir.path().join("registry.txt"));
        let cfg = cfg.into_config().unwrap();
        assert_eq!(cfg.fault_mode, FaultMode::DropRequests);
        assert_eq!(cfg.deadline, Duration::from_millis(250));
        assert!(cfg.driver_bindings.contains_key("we-trade"));

        std::fs::write(&path, "local_network_id = \"x\"\nregistry_path = \"r\"\nbogus = 1\n").unwrap();
        assert!(RelayFileConfig::load(&path).is_err());
    }
}
