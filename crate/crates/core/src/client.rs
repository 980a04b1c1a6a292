//! Destination-side application support: identity bootstrap, remote queries
//! through the local relay, client-side decryption with pre-flight proof
//! checks, and the argument vector for the dependent local transaction.

use std::sync::Mutex;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::codec::{Canonical, Digest};
use crate::crypto::{hybrid_decrypt, Certificate, CryptoError, KeyPair, RootAuthority, SubjectKind};
use crate::relay::transport::{self, CallError};
use crate::system::proof::{check_proof, ProofRejection};
use crate::system::{decode_proof, encode_proof, AttestationMetadata, ForeignNetworkConfig, ProofEntry, VerificationPolicy};
use crate::wire::{decode, Message, QueryRequest, QueryResponse, Status, MAX_FRAME_LEN};

/// Slack on top of the relay deadline before the client gives up on the
/// socket itself. The relay is expected to answer `error("timeout")` first.
const CLIENT_SLACK: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("local relay: {0}")]
    Transport(#[from] CallError),
    #[error("denied: {0}")]
    Denied(String),
    #[error("relay error: {0}")]
    Relay(String),
    /// Decryption or decoding of the sealed payload failed.
    #[error("proof-tamper")]
    ProofTamper,
    #[error("pre-flight rejected: {}", .0.code())]
    Preflight(ProofRejection),
    #[error("response does not answer the request")]
    MismatchedResponse,
    #[error("transaction arguments exceed {MAX_FRAME_LEN} bytes")]
    Oversize,
    #[error(transparent)]
    Identity(#[from] CryptoError),
}

impl ClientError {
    /// Short label used in transcripts.
    pub fn verdict(&self) -> String {
        match self {
            ClientError::Transport(e) => e.reason().to_string(),
            ClientError::Denied(r) => format!("denied:{r}"),
            ClientError::Relay(r) => format!("error:{r}"),
            ClientError::ProofTamper => "proof-tamper".into(),
            ClientError::Preflight(r) => r.code().into(),
            ClientError::MismatchedResponse => "mismatched-response".into(),
            ClientError::Oversize => "oversize".into(),
            ClientError::Identity(_) => "identity".into(),
        }
    }

    /// Worth another attempt through a (possibly different) relay.
    pub fn retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Relay(r) => r == "timeout" || r == "unreachable",
            _ => false,
        }
    }
}

/// Client key pair plus the certificate issued by the client's org.
#[derive(Debug, Clone)]
pub struct ClientIdentity {
    pub keys: KeyPair,
    pub certificate: Certificate,
}

impl ClientIdentity {
    /// Generates keys from `rng` and has `authority` certify them.
    pub fn bootstrap<R: RngCore + rand::CryptoRng>(
        authority: &RootAuthority,
        subject_id: &str,
        rng: &mut R,
    ) -> Result<Self, ClientError> {
        let keys = KeyPair::from_rng(rng);
        let certificate = authority.issue_certificate(subject_id, SubjectKind::Client, &keys)?;
        Ok(Self { keys, certificate })
    }
}

/// Where and what to query on the remote network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteTarget {
    pub dest_network_id: String,
    pub ledger_id: String,
    pub contract_name: String,
    pub function_name: String,
    pub args: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, Copy)]
pub struct QueryOptions {
    /// Deadline the local relay applies; the client waits a little longer.
    pub deadline: Duration,
    /// Attempts through the local relay. Timeouts and unreachable errors
    /// are retried; the relay rotates to the next registered source relay.
    pub max_attempts: usize,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self { deadline: crate::relay::DEFAULT_DEADLINE, max_attempts: 1 }
    }
}

/// Result and plaintext proof, after pre-flight checks passed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedRemoteData {
    pub result: Vec<u8>,
    pub proof: Vec<ProofEntry>,
    pub request_digest: Digest,
    pub nonce: [u8; 16],
}

/// Local contract call embedding verified remote data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependentTransaction {
    pub contract_name: String,
    pub function_name: String,
    pub args: Vec<Vec<u8>>,
}

/// One request and whatever came back for it.
#[derive(Debug)]
pub struct Attempt {
    pub request: QueryRequest,
    /// Decoded response and its raw frame, when one arrived.
    pub response: Option<(QueryResponse, Vec<u8>)>,
    pub outcome: Result<VerifiedRemoteData, ClientError>,
}

pub struct Client {
    identity: ClientIdentity,
    relay_addr: String,
    rng: Mutex<ChaCha20Rng>,
}

impl Client {
    /// `seed` fixes the request id and nonce sequence; `None` uses OS entropy.
    pub fn new(identity: ClientIdentity, relay_addr: impl Into<String>, seed: Option<u64>) -> Self {
        let rng = match seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_entropy(),
        };
        Self { identity, relay_addr: relay_addr.into(), rng: Mutex::new(rng) }
    }

    pub fn identity(&self) -> &ClientIdentity {
        &self.identity
    }

    pub fn relay_addr(&self) -> &str {
        &self.relay_addr
    }

    /// Fresh request id and nonce.
    pub fn new_request(&self, target: &RemoteTarget, policy: &VerificationPolicy) -> QueryRequest {
        let mut rng = self.rng.lock().expect("client rng poisoned");
        let mut request_id = [0u8; 16];
        let mut nonce = [0u8; 16];
        rng.fill_bytes(&mut request_id);
        rng.fill_bytes(&mut nonce);
        QueryRequest {
            request_id,
            dest_network_id: target.dest_network_id.clone(),
            ledger_id: target.ledger_id.clone(),
            contract_name: target.contract_name.clone(),
            function_name: target.function_name.clone(),
            args: target.args.clone(),
            verification_policy: policy.clone(),
            requestor_cert: self.identity.certificate.clone(),
            nonce,
        }
    }

    /// Sends one request through the local relay and returns the raw
    /// response with its frame.
    pub fn send(&self, request: &QueryRequest, deadline: Duration) -> Result<(QueryResponse, Vec<u8>), ClientError> {
        Ok(transport::call(&self.relay_addr, request, deadline + CLIENT_SLACK, None)?)
    }

    /// One round trip through the local relay, keeping the raw response.
    pub fn attempt(
        &self,
        target: &RemoteTarget,
        policy: &VerificationPolicy,
        config: &ForeignNetworkConfig,
        deadline: Duration,
    ) -> Attempt {
        let request = self.new_request(target, policy);
        match self.send(&request, deadline) {
            Ok((response, frame)) => {
                let outcome = self.open_response(&request, &response, config);
                Attempt { request, response: Some((response, frame)), outcome }
            }
            Err(e) => Attempt { request, response: None, outcome: Err(e) },
        }
    }

    /// Queries the remote network and pre-flight checks the proof against
    /// `config` (the source's recorded identity roots) and `policy`.
    pub fn remote_query(
        &self,
        target: &RemoteTarget,
        policy: &VerificationPolicy,
        config: &ForeignNetworkConfig,
        options: QueryOptions,
    ) -> Result<VerifiedRemoteData, ClientError> {
        let mut last = None;
        for _ in 0..options.max_attempts.max(1) {
            match self.attempt(target, policy, config, options.deadline).outcome {
                Err(e) if e.retryable() => last = Some(e),
                other => return other,
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// Decrypts and checks a response to `request`.
    pub fn open_response(
        &self,
        request: &QueryRequest,
        response: &QueryResponse,
        config: &ForeignNetworkConfig,
    ) -> Result<VerifiedRemoteData, ClientError> {
        open_response(&self.identity.keys, request, response, config)
    }

    /// As [`Client::open_response`], from a raw response frame.
    pub fn open_response_bytes(
        &self,
        request: &QueryRequest,
        frame: &[u8],
        config: &ForeignNetworkConfig,
    ) -> Result<VerifiedRemoteData, ClientError> {
        match decode(frame) {
            Ok(Message::Response(response)) => self.open_response(request, &response, config),
            _ => Err(ClientError::ProofTamper),
        }
    }
}

/// Decrypts the result and every attestation with `keys`, then runs the
/// same proof clauses the acceptance contract runs (except replay).
pub fn open_response(
    keys: &KeyPair,
    request: &QueryRequest,
    response: &QueryResponse,
    config: &ForeignNetworkConfig,
) -> Result<VerifiedRemoteData, ClientError> {
    if response.request_id != request.request_id {
        return Err(ClientError::MismatchedResponse);
    }
    let payload = match response.status {
        Status::Denied => return Err(ClientError::Denied(response.reason.clone())),
        Status::Error => return Err(ClientError::Relay(response.reason.clone())),
        Status::Ok => response.payload.as_ref().ok_or(ClientError::ProofTamper)?,
    };
    let result = hybrid_decrypt(&keys.enc_private_key, &payload.encrypted_result).map_err(|_| ClientError::ProofTamper)?;
    let proof = payload
        .attestations
        .iter()
        .map(|a| {
            let plain = hybrid_decrypt(&keys.enc_private_key, &a.encrypted_metadata).map_err(|_| ClientError::ProofTamper)?;
            let metadata = AttestationMetadata::from_canonical_bytes(&plain).map_err(|_| ClientError::ProofTamper)?;
            Ok(ProofEntry { signer_cert: a.signer_cert.clone(), metadata, signature: a.signature })
        })
        .collect::<Result<Vec<_>, ClientError>>()?;
    let request_digest = request.digest();
    check_proof(config, &request.verification_policy, &request_digest, &request.nonce, &result, &proof)
        .map_err(ClientError::Preflight)?;
    Ok(VerifiedRemoteData { result, proof, request_digest, nonce: request.nonce })
}

/// Arguments: `extra_args ‖ result ‖ encoded proof ‖ request digest ‖ nonce`.
pub fn build_dependent_transaction(
    verified: &VerifiedRemoteData,
    contract_name: &str,
    function_name: &str,
    extra_args: &[Vec<u8>],
) -> Result<DependentTransaction, ClientError> {
    let mut args = extra_args.to_vec();
    args.push(verified.result.clone());
    args.push(encode_proof(&verified.proof));
    args.push(verified.request_digest.to_vec());
    args.push(verified.nonce.to_vec());
    let size: usize = args.iter().map(|a| 4 + a.len()).sum();
    if size > MAX_FRAME_LEN {
        return Err(ClientError::Oversize);
    }
    Ok(DependentTransaction {
        contract_name: contract_name.to_string(),
        function_name: function_name.to_string(),
        args,
    })
}

/// Splits a dependent-transaction argument vector back into its parts:
/// `(extra_args, result, proof, request_digest, nonce)`.
pub fn split_dependent_args(
    args: &[Vec<u8>],
) -> Option<(&[Vec<u8>], &[u8], Vec<ProofEntry>, Digest, [u8; 16])> {
    let n = args.len();
    if n < 4 {
        return None;
    }
    let proof = decode_proof(&args[n - 3]).ok()?;
    let digest = args[n - 2].as_slice().try_into().ok()?;
    let nonce = args[n - 1].as_slice().try_into().ok()?;
    Some((&args[..n - 4], &args[n - 4], proof, digest, nonce))
}
