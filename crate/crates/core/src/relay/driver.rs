//! Network drivers: translate network-neutral queries into calls on a
//! concrete ledger.

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use crate::codec::Canonical;
use crate::crypto::{hybrid_encrypt, HybridCiphertext};
use crate::ledger::{LedgerError, Network};
use crate::system::AttestationMetadata;
use crate::wire::{Attestation, QueryRequest, SealedResult, Status};

use super::transport;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DriverError {
    /// Refused by policy; surfaces as a `denied` response.
    #[error("denied: {0}")]
    Denied(String),
    /// Execution failure; surfaces as an `error` response.
    #[error("failed: {0}")]
    Failed(String),
}

pub trait NetworkDriver: Send + Sync {
    /// One attestation per queried peer, plus the sealed result.
    fn execute_query(&self, request: &QueryRequest) -> Result<SealedResult, DriverError>;
}

/// Per-peer outcome recorded by [`SimDriver`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DriverEvent {
    pub request_id: [u8; 16],
    pub peer_id: String,
    pub org_id: String,
    /// `check_access=allow`, `check_access=deny(<reason>)` or `error(<code>)`.
    pub outcome: String,
}

/// Driver for the in-process ledger simulator.
///
/// Picks the lowest-id live peer of every org in the request's verification
/// policy and runs the function as a query there with the requestor as
/// caller. The contract path checks access and seals the result through
/// the exposure-control contract; this driver then plays the peer's
/// attestation plugin: it signs the plaintext metadata with the peer key and
/// encrypts it for the requestor.
pub struct SimDriver {
    network: Arc<Network>,
    ledger_id: String,
    events: Mutex<Vec<DriverEvent>>,
}

impl SimDriver {
    pub fn new(network: Arc<Network>, ledger_id: impl Into<String>) -> Self {
        Self { network, ledger_id: ledger_id.into(), events: Mutex::new(Vec::new()) }
    }

    pub fn events(&self) -> Vec<DriverEvent> {
        self.events.lock().expect("driver events poisoned").clone()
    }

    fn record(&self, request: &QueryRequest, peer_id: &str, org_id: &str, outcome: String) {
        self.events.lock().expect("driver events poisoned").push(DriverEvent {
            request_id: request.request_id,
            peer_id: peer_id.to_string(),
            org_id: org_id.to_string(),
            outcome,
        });
    }
}

impl NetworkDriver for SimDriver {
    fn execute_query(&self, request: &QueryRequest) -> Result<SealedResult, DriverError> {
        if request.dest_network_id != self.network.network_id() {
            return Err(DriverError::Denied("unknown-local-network".into()));
        }
        if request.ledger_id != self.ledger_id {
            return Err(DriverError::Denied("unknown-ledger".into()));
        }
        let policy = &request.verification_policy;
        if policy.network_id != self.network.network_id() || policy.required_orgs.is_empty() {
            return Err(DriverError::Denied("policy-unsatisfiable-at-source".into()));
        }
        let mut seen = BTreeSet::new();
        let mut selected = Vec::new();
        for org in policy.required_orgs.iter().filter(|o| seen.insert(o.as_str())) {
            let peer = self
                .network
                .select_peer(org)
                .ok_or_else(|| DriverError::Denied("policy-unsatisfiable-at-source".into()))?;
            selected.push(peer);
        }

        let digest = request.digest();
        let mut denied = None;
        let mut failed = None;
        let mut sealed: Option<HybridCiphertext> = None;
        let mut plaintext: Option<Vec<u8>> = None;
        let mut attestations = Vec::new();
        for peer in &selected {
            let out = self.network.query_detailed(
                &peer.peer_id,
                &request.contract_name,
                &request.function_name,
                &request.args,
                &request.requestor_cert,
                request.nonce,
            );
            let out = match out {
                Ok(out) => out,
                Err(LedgerError::Contract(e)) if e.code == "access" => {
                    self.record(request, &peer.peer_id, &peer.org_id, format!("check_access=deny({})", e.message));
                    denied.get_or_insert_with(|| "access".to_string());
                    continue;
                }
                Err(e) => {
                    let code = e.contract_code().unwrap_or("execution").to_string();
                    self.record(request, &peer.peer_id, &peer.org_id, format!("error({code})"));
                    failed.get_or_insert(code);
                    continue;
                }
            };
            self.record(request, &peer.peer_id, &peer.org_id, "check_access=allow".into());

            let (Some(result), Ok(ciphertext)) = (out.private_output, HybridCiphertext::from_canonical_bytes(&out.result))
            else {
                failed.get_or_insert_with(|| "unsealed-result".to_string());
                continue;
            };
            if plaintext.as_ref().is_some_and(|p| p != &result) {
                failed.get_or_insert_with(|| "result-divergence".to_string());
                continue;
            }
            let metadata = AttestationMetadata {
                network_id: self.network.network_id().to_string(),
                peer_id: peer.peer_id.clone(),
                org_id: peer.org_id.clone(),
                request_digest: digest,
                nonce: request.nonce,
                result: result.clone(),
            };
            let bytes = metadata.to_canonical_bytes();
            let signature = self
                .network
                .peer_sign(&peer.peer_id, &bytes)
                .map_err(|e| DriverError::Failed(e.to_string()))?;
            let encrypted_metadata = hybrid_encrypt(&request.requestor_cert.enc_public_key, &bytes)
                .map_err(|_| DriverError::Failed("bad-requestor-key".into()))?;
            attestations.push(Attestation { signer_cert: peer.certificate.clone(), encrypted_metadata, signature });
            sealed.get_or_insert(ciphertext);
            plaintext.get_or_insert(result);
        }
        if let Some(reason) = denied {
            return Err(DriverError::Denied(reason));
        }
        if let Some(code) = failed {
            return Err(DriverError::Failed(code));
        }
        Ok(SealedResult { encrypted_result: sealed.expect("at least one peer queried"), attestations })
    }
}

/// Driver that forwards to a driver endpoint over TCP. Lets a relay run in
/// a different process from the ledger it serves.
pub struct TcpDriver {
    addr: String,
    timeout: Duration,
}

impl TcpDriver {
    pub fn new(addr: impl Into<String>, timeout: Duration) -> Self {
        Self { addr: addr.into(), timeout }
    }
}

impl NetworkDriver for TcpDriver {
    fn execute_query(&self, request: &QueryRequest) -> Result<SealedResult, DriverError> {
        let (response, _) = transport::call(&self.addr, request, self.timeout, None)
            .map_err(|e| DriverError::Failed(format!("driver-{}", e.reason())))?;
        match response.status {
            Status::Ok => response.payload.ok_or_else(|| DriverError::Failed("empty-payload".into())),
            Status::Denied => Err(DriverError::Denied(response.reason)),
            Status::Error => Err(DriverError::Failed(response.reason)),
        }
    }
}
