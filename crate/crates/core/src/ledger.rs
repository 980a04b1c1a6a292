//! In-process permissioned ledger: organizations with their own identity
//! authorities, peers holding hash-chained replicas, a contract runtime and
//! endorsement-policy-gated commits.
//!
//! Ordering is a single in-process lock per network. A transaction is
//! executed on the lowest-id live peer of every org named in the contract's
//! endorsement policy; if every endorser computes the same result digest the
//! block is appended to every replica, otherwise nothing changes.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::codec::{canonical_digest, sha256, Canonical, CodecError, Digest, StructReader, StructWriter};
use crate::crypto::{check_chain, verifies, Certificate, KeyPair, PublicKey, RootAuthority, SubjectKind};

pub type WorldState = BTreeMap<Vec<u8>, Vec<u8>>;

const MAX_INVOKE_DEPTH: usize = 8;

/// Error raised by contract code. `code` is a stable machine-readable reason.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{code}: {message}")]
pub struct ContractError {
    pub code: String,
    pub message: String,
}

impl ContractError {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self { code: code.into(), message: message.into() }
    }

    pub fn bad_args(message: impl Into<String>) -> Self {
        Self::new("bad-args", message)
    }
}

impl From<CodecError> for ContractError {
    fn from(e: CodecError) -> Self {
        Self::new("bad-args", e.to_string())
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("network needs at least one organization")]
    NoOrgs,
    #[error("each organization needs at least one peer")]
    NoPeers,
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("contract {0:?} already deployed")]
    DuplicateContract(String),
    #[error("unknown contract {0:?}")]
    UnknownContract(String),
    #[error("unknown peer {0:?}")]
    UnknownPeer(String),
    #[error("unknown organization {0:?}")]
    UnknownOrg(String),
    #[error("endorsement policy must name at least one organization")]
    EmptyPolicy,
    #[error("endorsement policy unsatisfiable: organization {0:?} has no live peer")]
    PolicyUnsatisfiable(String),
    #[error("endorsers disagree on the execution result")]
    EndorsementMismatch,
    #[error("submitter certificate not issued by this network")]
    UnauthorizedSubmitter,
    #[error("query attempted a world-state write")]
    WriteViolation,
    #[error("contract error: {0}")]
    Contract(#[from] ContractError),
}

impl LedgerError {
    /// The contract's reason code when the failure came from contract code.
    pub fn contract_code(&self) -> Option<&str> {
        match self {
            LedgerError::Contract(e) => Some(&e.code),
            _ => None,
        }
    }
}

/// Deterministic contract code, registered by name.
pub trait Contract: Send + Sync {
    fn invoke(&self, ctx: &mut ContractContext<'_>, function: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ContractError>;
}

type Registry = BTreeMap<String, Arc<dyn Contract>>;

/// What contract code sees while executing on one peer.
pub struct ContractContext<'a> {
    network_id: &'a str,
    peer_id: &'a str,
    state: &'a WorldState,
    contracts: &'a Registry,
    caller: &'a Certificate,
    nonce: [u8; 16],
    read_only: bool,
    writes: WorldState,
    private_output: Option<Vec<u8>>,
    violated: bool,
    depth: usize,
}

impl<'a> ContractContext<'a> {
    pub fn get(&self, key: &[u8]) -> Option<Vec<u8>> {
        self.writes.get(key).or_else(|| self.state.get(key)).cloned()
    }

    pub fn put(&mut self, key: impl Into<Vec<u8>>, value: impl Into<Vec<u8>>) -> Result<(), ContractError> {
        if self.read_only {
            self.violated = true;
            return Err(ContractError::new("write-in-query", "world-state write during a query"));
        }
        self.writes.insert(key.into(), value.into());
        Ok(())
    }

    /// Calls another contract on the same peer, sharing this execution's
    /// read/write view.
    pub fn invoke(&mut self, contract: &str, function: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ContractError> {
        if self.depth >= MAX_INVOKE_DEPTH {
            return Err(ContractError::new("invoke-depth", "contract invocation nested too deeply"));
        }
        let target = self
            .contracts
            .get(contract)
            .cloned()
            .ok_or_else(|| ContractError::new("unknown-contract", contract.to_string()))?;
        self.depth += 1;
        let out = target.invoke(self, function, args);
        self.depth -= 1;
        out
    }

    pub fn caller(&self) -> &Certificate {
        self.caller
    }

    pub fn nonce(&self) -> [u8; 16] {
        self.nonce
    }

    pub fn network_id(&self) -> &str {
        self.network_id
    }

    pub fn peer_id(&self) -> &str {
        self.peer_id
    }

    pub fn is_query(&self) -> bool {
        self.read_only
    }

    /// Peer-local output that never leaves the peer as part of the result.
    /// Peer-side plugins (see the relay's ledger driver) may read it.
    pub fn set_private_output(&mut self, bytes: Vec<u8>) {
        self.private_output = Some(bytes);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndorsementPolicy {
    pub required_orgs: Vec<String>,
}

impl EndorsementPolicy {
    pub fn new<S: Into<String>>(orgs: impl IntoIterator<Item = S>) -> Self {
        Self { required_orgs: orgs.into_iter().map(Into::into).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endorsement {
    pub endorser_cert: Certificate,
    pub signature: [u8; 64],
}

impl Canonical for Endorsement {
    fn encode_into(&self, out: &mut Vec<u8>) {
        StructWriter::new(out).value(1, &self.endorser_cert).raw(2, &self.signature);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let e = Endorsement { endorser_cert: r.value(1)?, signature: r.fixed(2)? };
        r.finish()?;
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub contract_name: String,
    pub function_name: String,
    pub args: Vec<Vec<u8>>,
    pub submitter_cert: Certificate,
    pub nonce: [u8; 16],
    pub result: Vec<u8>,
    pub endorsements: Vec<Endorsement>,
}

impl Canonical for Transaction {
    fn encode_into(&self, out: &mut Vec<u8>) {
        StructWriter::new(out)
            .str(1, &self.contract_name)
            .str(2, &self.function_name)
            .bytes_list(3, &self.args)
            .value(4, &self.submitter_cert)
            .raw(5, &self.nonce)
            .raw(6, &self.result)
            .list(7, &self.endorsements);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let tx = Transaction {
            contract_name: r.string(1)?,
            function_name: r.string(2)?,
            args: r.bytes_list(3)?,
            submitter_cert: r.value(4)?,
            nonce: r.fixed(5)?,
            result: r.bytes(6)?,
            endorsements: r.list(7)?,
        };
        r.finish()?;
        Ok(tx)
    }
}

/// Digest every endorser signs: the executed call plus its read/write outcome.
pub fn proposal_digest(
    contract: &str,
    function: &str,
    args: &[Vec<u8>],
    nonce: &[u8; 16],
    result: &[u8],
    writes: &WorldState,
) -> Digest {
    let mut out = Vec::new();
    StructWriter::new(&mut out)
        .str(1, contract)
        .str(2, function)
        .bytes_list(3, args)
        .raw(4, nonce)
        .raw(5, result)
        .map(6, writes);
    sha256(&out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub tx_digests: Vec<Digest>,
    pub state_delta: WorldState,
    pub block_hash: Digest,
    pub transactions: Vec<Transaction>,
}

impl Block {
    pub fn compute_hash(height: u64, prev_hash: &Digest, tx_digests: &[Digest], state_delta: &WorldState) -> Digest {
        let mut out = Vec::new();
        StructWriter::new(&mut out)
            .u64(1, height)
            .raw(2, prev_hash)
            .bytes_list(3, tx_digests)
            .map(4, state_delta);
        sha256(&out)
    }

    fn genesis() -> Self {
        Self::new(0, [0; 32], Vec::new(), WorldState::new())
    }

    fn new(height: u64, prev_hash: Digest, transactions: Vec<Transaction>, state_delta: WorldState) -> Self {
        let tx_digests: Vec<Digest> = transactions.iter().map(canonical_digest).collect();
        let block_hash = Self::compute_hash(height, &prev_hash, &tx_digests, &state_delta);
        Block { height, prev_hash, tx_digests, state_delta, block_hash, transactions }
    }
}

impl Canonical for Block {
    fn encode_into(&self, out: &mut Vec<u8>) {
        StructWriter::new(out)
            .u64(1, self.height)
            .raw(2, &self.prev_hash)
            .bytes_list(3, &self.tx_digests)
            .map(4, &self.state_delta)
            .raw(5, &self.block_hash)
            .list(6, &self.transactions);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let height = r.u64(1)?;
        let prev_hash = r.fixed(2)?;
        let tx_digests = r
            .bytes_list(3)?
            .into_iter()
            .map(|d| Digest::try_from(d.as_slice()).map_err(|_| CodecError::BadLength { expected: 32, found: d.len() }))
            .collect::<Result<_, _>>()?;
        let b = Block {
            height,
            prev_hash,
            tx_digests,
            state_delta: r.map(4)?,
            block_hash: r.fixed(5)?,
            transactions: r.list(6)?,
        };
        r.finish()?;
        Ok(b)
    }
}

pub struct Peer {
    pub peer_id: String,
    pub org_id: String,
    pub certificate: Certificate,
    keys: KeyPair,
    pub world_state: WorldState,
    pub chain: Vec<Block>,
    contracts: Registry,
    live: bool,
}

impl fmt::Debug for Peer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Peer")
            .field("peer_id", &self.peer_id)
            .field("org_id", &self.org_id)
            .field("height", &self.height())
            .finish_non_exhaustive()
    }
}

impl Peer {
    pub fn height(&self) -> u64 {
        self.chain.last().map_or(0, |b| b.height)
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    /// Every block hash recomputes, every link matches, and the world state
    /// equals the replay of all state deltas.
    pub fn verify_chain(&self) -> bool {
        let mut prev = [0u8; 32];
        let mut replayed = WorldState::new();
        for (i, block) in self.chain.iter().enumerate() {
            let digests: Vec<Digest> = block.transactions.iter().map(canonical_digest).collect();
            if block.height != i as u64
                || block.prev_hash != prev
                || digests != block.tx_digests
                || Block::compute_hash(block.height, &block.prev_hash, &block.tx_digests, &block.state_delta)
                    != block.block_hash
            {
                return false;
            }
            replayed.extend(block.state_delta.iter().map(|(k, v)| (k.clone(), v.clone())));
            prev = block.block_hash;
        }
        !self.chain.is_empty() && replayed == self.world_state
    }

    fn execute(
        &self,
        network_id: &str,
        contract: &str,
        function: &str,
        args: &[Vec<u8>],
        caller: &Certificate,
        nonce: [u8; 16],
        read_only: bool,
    ) -> Result<Execution, LedgerError> {
        let target = self
            .contracts
            .get(contract)
            .cloned()
            .ok_or_else(|| LedgerError::UnknownContract(contract.to_string()))?;
        let mut ctx = ContractContext {
            network_id,
            peer_id: &self.peer_id,
            state: &self.world_state,
            contracts: &self.contracts,
            caller,
            nonce,
            read_only,
            writes: WorldState::new(),
            private_output: None,
            violated: false,
            depth: 0,
        };
        let result = target.invoke(&mut ctx, function, args);
        if ctx.violated {
            return Err(LedgerError::WriteViolation);
        }
        Ok(Execution { result: result?, writes: ctx.writes, private_output: ctx.private_output })
    }
}

struct Execution {
    result: Vec<u8>,
    writes: WorldState,
    private_output: Option<Vec<u8>>,
}

/// Read-only query outcome including the peer-local private output.
#[derive(Debug, Clone)]
pub struct QueryOutput {
    pub result: Vec<u8>,
    pub private_output: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitReport {
    pub height: u64,
    pub result: Vec<u8>,
    pub tx_digest: Digest,
    pub block_hash: Digest,
}

/// Identity material for one organization.
#[derive(Debug)]
pub struct OrgSpec {
    pub org_id: String,
    pub authority: RootAuthority,
}

/// Public description of a peer, safe to hand out.
#[derive(Debug, Clone)]
pub struct PeerInfo {
    pub peer_id: String,
    pub org_id: String,
    pub certificate: Certificate,
    pub live: bool,
}

/// Clone of one replica's chain and state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicaSnapshot {
    pub chain: Vec<Block>,
    pub world_state: WorldState,
}

impl ReplicaSnapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        StructWriter::new(&mut out).list(1, &self.chain).map(2, &self.world_state);
        out
    }
}

struct NetworkState {
    peers: Vec<Peer>,
    policies: BTreeMap<String, EndorsementPolicy>,
    ordering_seq: u64,
}

pub struct Network {
    network_id: String,
    orgs: Vec<OrgSpec>,
    state: RwLock<NetworkState>,
}

impl fmt::Debug for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Network")
            .field("network_id", &self.network_id)
            .field("orgs", &self.org_ids())
            .field("height", &self.height())
            .finish()
    }
}

/// Peer ids derive from the org id: "carrier-org" → "carrier-peer-0".
pub fn peer_id_for(org_id: &str, index: usize) -> String {
    format!("{}-peer-{index}", org_id.strip_suffix("-org").unwrap_or(org_id))
}

impl Network {
    /// Builds a network from explicit org authorities; peer keys come from `rng`.
    pub fn create<R: RngCore + rand::CryptoRng>(
        network_id: &str,
        orgs: Vec<OrgSpec>,
        peers_per_org: usize,
        rng: &mut R,
    ) -> Result<Self, LedgerError> {
        if orgs.is_empty() {
            return Err(LedgerError::NoOrgs);
        }
        if peers_per_org == 0 {
            return Err(LedgerError::NoPeers);
        }
        let mut seen = std::collections::BTreeSet::new();
        for org in &orgs {
            if !seen.insert(org.org_id.clone()) {
                return Err(LedgerError::DuplicateId(org.org_id.clone()));
            }
        }
        let genesis = Block::genesis();
        let mut peers = Vec::new();
        for org in &orgs {
            for i in 0..peers_per_org {
                let peer_id = peer_id_for(&org.org_id, i);
                let keys = KeyPair::from_rng(rng);
                let certificate = org
                    .authority
                    .issue_certificate(&peer_id, SubjectKind::Peer, &keys)
                    .map_err(|_| LedgerError::DuplicateId(peer_id.clone()))?;
                peers.push(Peer {
                    peer_id,
                    org_id: org.org_id.clone(),
                    certificate,
                    keys,
                    world_state: WorldState::new(),
                    chain: vec![genesis.clone()],
                    contracts: Registry::new(),
                    live: true,
                });
            }
        }
        peers.sort_by(|a, b| a.peer_id.cmp(&b.peer_id));
        Ok(Self {
            network_id: network_id.to_string(),
            orgs,
            state: RwLock::new(NetworkState { peers, policies: BTreeMap::new(), ordering_seq: 0 }),
        })
    }

    /// Convenience constructor: all keys derive from `seed` and the network id,
    /// or from OS entropy when `seed` is `None`.
    pub fn with_orgs(network_id: &str, org_ids: &[&str], peers_per_org: usize, seed: Option<u64>) -> Result<Self, LedgerError> {
        let mut rng = network_rng(network_id, seed);
        let orgs = org_ids
            .iter()
            .map(|org| OrgSpec {
                org_id: org.to_string(),
                authority: RootAuthority::new(*org, network_id, KeyPair::from_rng(&mut rng)),
            })
            .collect();
        Self::create(network_id, orgs, peers_per_org, &mut rng)
    }

    pub fn network_id(&self) -> &str {
        &self.network_id
    }

    pub fn org_ids(&self) -> Vec<String> {
        self.orgs.iter().map(|o| o.org_id.clone()).collect()
    }

    pub fn authority(&self, org_id: &str) -> Option<&RootAuthority> {
        self.orgs.iter().find(|o| o.org_id == org_id).map(|o| &o.authority)
    }

    pub fn root_keys(&self) -> BTreeMap<String, PublicKey> {
        self.orgs
            .iter()
            .map(|o| (o.org_id.clone(), o.authority.root_public_key()))
            .collect()
    }

    fn read(&self) -> RwLockReadGuard<'_, NetworkState> {
        self.state.read().expect("network lock poisoned")
    }

    fn write(&self) -> RwLockWriteGuard<'_, NetworkState> {
        self.state.write().expect("network lock poisoned")
    }

    pub fn peers(&self) -> Vec<PeerInfo> {
        self.read()
            .peers
            .iter()
            .map(|p| PeerInfo {
                peer_id: p.peer_id.clone(),
                org_id: p.org_id.clone(),
                certificate: p.certificate.clone(),
                live: p.live,
            })
            .collect()
    }

    pub fn peer_ids(&self) -> Vec<String> {
        self.read().peers.iter().map(|p| p.peer_id.clone()).collect()
    }

    pub fn height(&self) -> u64 {
        self.read().peers.first().map_or(0, Peer::height)
    }

    pub fn ordering_seq(&self) -> u64 {
        self.read().ordering_seq
    }

    pub fn set_peer_live(&self, peer_id: &str, live: bool) -> Result<(), LedgerError> {
        let mut st = self.write();
        let peer = st
            .peers
            .iter_mut()
            .find(|p| p.peer_id == peer_id)
            .ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_string()))?;
        peer.live = live;
        Ok(())
    }

    /// Lowest-id live peer of `org_id`.
    pub fn select_peer(&self, org_id: &str) -> Option<PeerInfo> {
        self.peers().into_iter().find(|p| p.org_id == org_id && p.live)
    }

    pub fn deploy_contract(
        &self,
        contract_name: &str,
        contract: Arc<dyn Contract>,
        policy: EndorsementPolicy,
    ) -> Result<(), LedgerError> {
        if policy.required_orgs.is_empty() {
            return Err(LedgerError::EmptyPolicy);
        }
        if let Some(org) = policy.required_orgs.iter().find(|o| self.authority(o).is_none()) {
            return Err(LedgerError::UnknownOrg(org.clone()));
        }
        let mut st = self.write();
        if st.policies.contains_key(contract_name) {
            return Err(LedgerError::DuplicateContract(contract_name.to_string()));
        }
        for peer in &mut st.peers {
            peer.contracts.insert(contract_name.to_string(), Arc::clone(&contract));
        }
        st.policies.insert(contract_name.to_string(), policy);
        Ok(())
    }

    pub fn endorsement_policy(&self, contract_name: &str) -> Option<EndorsementPolicy> {
        self.read().policies.get(contract_name).cloned()
    }

    pub fn has_contract(&self, peer_id: &str, contract_name: &str) -> bool {
        self.read()
            .peers
            .iter()
            .any(|p| p.peer_id == peer_id && p.contracts.contains_key(contract_name))
    }

    pub fn query(
        &self,
        peer_id: &str,
        contract: &str,
        function: &str,
        args: &[Vec<u8>],
        caller: &Certificate,
        nonce: [u8; 16],
    ) -> Result<Vec<u8>, LedgerError> {
        Ok(self.query_detailed(peer_id, contract, function, args, caller, nonce)?.result)
    }

    pub fn query_detailed(
        &self,
        peer_id: &str,
        contract: &str,
        function: &str,
        args: &[Vec<u8>],
        caller: &Certificate,
        nonce: [u8; 16],
    ) -> Result<QueryOutput, LedgerError> {
        let st = self.read();
        let peer = st
            .peers
            .iter()
            .find(|p| p.peer_id == peer_id)
            .ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_string()))?;
        let exec = peer.execute(&self.network_id, contract, function, args, caller, nonce, true)?;
        Ok(QueryOutput { result: exec.result, private_output: exec.private_output })
    }

    /// Signs `payload` with the given peer's key. Used by peer-side plugins
    /// that replace the normal endorsement output.
    pub fn peer_sign(&self, peer_id: &str, payload: &[u8]) -> Result<[u8; 64], LedgerError> {
        let st = self.read();
        let peer = st
            .peers
            .iter()
            .find(|p| p.peer_id == peer_id)
            .ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_string()))?;
        Ok(peer.keys.sign(payload))
    }

    pub fn submit_transaction(
        &self,
        contract: &str,
        function: &str,
        args: &[Vec<u8>],
        submitter: &Certificate,
        nonce: [u8; 16],
    ) -> Result<CommitReport, LedgerError> {
        if check_chain(submitter, &self.root_keys()).is_err() || submitter.network_id != self.network_id {
            return Err(LedgerError::UnauthorizedSubmitter);
        }
        let mut st = self.write();
        let policy = st
            .policies
            .get(contract)
            .cloned()
            .ok_or_else(|| LedgerError::UnknownContract(contract.to_string()))?;

        let mut endorser_idx = Vec::new();
        for org in &policy.required_orgs {
            let idx = st
                .peers
                .iter()
                .position(|p| &p.org_id == org && p.live)
                .ok_or_else(|| LedgerError::PolicyUnsatisfiable(org.clone()))?;
            if !endorser_idx.contains(&idx) {
                endorser_idx.push(idx);
            }
        }

        let mut agreed: Option<(Digest, Execution)> = None;
        let mut endorsements = Vec::new();
        for &idx in &endorser_idx {
            let peer = &st.peers[idx];
            let exec = peer.execute(&self.network_id, contract, function, args, submitter, nonce, false)?;
            let digest = proposal_digest(contract, function, args, &nonce, &exec.result, &exec.writes);
            match &agreed {
                Some((d, _)) if *d != digest => return Err(LedgerError::EndorsementMismatch),
                Some(_) => {}
                None => agreed = Some((digest, exec)),
            }
            endorsements.push(Endorsement { endorser_cert: peer.certificate.clone(), signature: peer.keys.sign(&digest) });
        }
        let (digest, exec) = agreed.expect("policy has at least one org");

        let tx = Transaction {
            contract_name: contract.to_string(),
            function_name: function.to_string(),
            args: args.to_vec(),
            submitter_cert: submitter.clone(),
            nonce,
            result: exec.result.clone(),
            endorsements,
        };
        if !endorsements_satisfy(&tx, &digest, &policy, &self.root_keys()) {
            return Err(LedgerError::EndorsementMismatch);
        }

        let tip = st.peers[0].chain.last().expect("genesis present");
        let block = Block::new(tip.height + 1, tip.block_hash, vec![tx], exec.writes.clone());
        let report = CommitReport {
            height: block.height,
            result: exec.result,
            tx_digest: block.tx_digests[0],
            block_hash: block.block_hash,
        };
        for peer in &mut st.peers {
            peer.world_state.extend(block.state_delta.iter().map(|(k, v)| (k.clone(), v.clone())));
            peer.chain.push(block.clone());
        }
        st.ordering_seq += 1;
        Ok(report)
    }

    pub fn verify_chain(&self, peer_id: &str) -> Result<bool, LedgerError> {
        let st = self.read();
        let peer = st
            .peers
            .iter()
            .find(|p| p.peer_id == peer_id)
            .ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_string()))?;
        Ok(peer.verify_chain())
    }

    pub fn snapshot(&self, peer_id: &str) -> Result<ReplicaSnapshot, LedgerError> {
        let st = self.read();
        let peer = st
            .peers
            .iter()
            .find(|p| p.peer_id == peer_id)
            .ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_string()))?;
        Ok(ReplicaSnapshot { chain: peer.chain.clone(), world_state: peer.world_state.clone() })
    }

    /// True iff every replica holds byte-identical chains and states.
    pub fn replicas_consistent(&self) -> bool {
        let st = self.read();
        let first = &st.peers[0];
        st.peers
            .iter()
            .all(|p| p.chain == first.chain && p.world_state == first.world_state)
    }

    /// Every committed transaction carries endorsements satisfying the
    /// policy under which it was ordered.
    pub fn endorsements_sound(&self) -> bool {
        let st = self.read();
        let roots = self.root_keys();
        st.peers[0].chain.iter().skip(1).all(|block| {
            block.transactions.iter().all(|tx| {
                let Some(policy) = st.policies.get(&tx.contract_name) else { return false };
                let digest = proposal_digest(
                    &tx.contract_name,
                    &tx.function_name,
                    &tx.args,
                    &tx.nonce,
                    &tx.result,
                    &block.state_delta,
                );
                endorsements_satisfy(tx, &digest, policy, &roots)
            })
        })
    }

    /// Direct access to a replica. Fault-injection hook for tests.
    pub fn with_peer_mut<R>(&self, peer_id: &str, f: impl FnOnce(&mut Peer) -> R) -> Result<R, LedgerError> {
        let mut st = self.write();
        let peer = st
            .peers
            .iter_mut()
            .find(|p| p.peer_id == peer_id)
            .ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_string()))?;
        Ok(f(peer))
    }

    /// Text transcript of one replica: a `block` record per height with its
    /// transaction digests and writes, then the chain verification verdict.
    pub fn export_transcript(&self, peer_id: &str) -> Result<String, LedgerError> {
        let st = self.read();
        let peer = st
            .peers
            .iter()
            .find(|p| p.peer_id == peer_id)
            .ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_string()))?;
        let mut out = String::new();
        writeln!(out, "network {} peer {} height {}", self.network_id, peer.peer_id, peer.height()).unwrap();
        for block in &peer.chain {
            writeln!(
                out,
                "block {} prev {} hash {}",
                block.height,
                hex::encode(block.prev_hash),
                hex::encode(block.block_hash)
            )
            .unwrap();
            for d in &block.tx_digests {
                writeln!(out, "tx {}", hex::encode(d)).unwrap();
            }
            for (k, v) in &block.state_delta {
                writeln!(out, "put {} {}", hex::encode(k), hex::encode(v)).unwrap();
            }
        }
        writeln!(out, "verify_chain {}", peer.verify_chain()).unwrap();
        Ok(out)
    }
}

fn endorsements_satisfy(
    tx: &Transaction,
    digest: &Digest,
    policy: &EndorsementPolicy,
    roots: &BTreeMap<String, PublicKey>,
) -> bool {
    let all_valid = tx.endorsements.iter().all(|e| {
        e.endorser_cert.subject_kind == SubjectKind::Peer
            && check_chain(&e.endorser_cert, roots).is_ok()
            && verifies(&e.endorser_cert.public_key, digest, &e.signature)
    });
    all_valid
        && policy
            .required_orgs
            .iter()
            .all(|org| tx.endorsements.iter().any(|e| &e.endorser_cert.org_id == org))
}

/// Deterministic per-network RNG: seeded from `sha256(seed ‖ network_id)`.
pub fn network_rng(network_id: &str, seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(seed) => {
            let mut material = seed.to_be_bytes().to_vec();
            material.extend_from_slice(network_id.as_bytes());
            ChaCha20Rng::from_seed(sha256(&material))
        }
        None => ChaCha20Rng::from_entropy(),
    }
}
