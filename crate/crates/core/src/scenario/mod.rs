//! The trade use case end to end: a shipping network holding bills of
//! lading and a trade-finance network that releases payment only against a
//! proven B/L, plus adversarial variants.

pub mod contracts;
pub mod relays;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::client::{
    build_dependent_transaction, Client, ClientError, ClientIdentity, RemoteTarget, VerifiedRemoteData,
};
use crate::codec::{sha256, Canonical};
use crate::crypto::Certificate;
use crate::ledger::{network_rng, CommitReport, EndorsementPolicy, LedgerError, Network};
use crate::relay::registry::write_registry_file;
use crate::relay::{serve_driver_endpoint, FaultMode, NetworkDriver, RelayError, RelayHandle, SimDriver};
use crate::system::{
    cmdac, ecc, encode_proof, AccessRule, ConfigAcceptance, ExposureControl, ForeignNetworkConfig, ProofVerdict,
    VerificationPolicy, CMDAC, ECC,
};
use crate::wire::QueryRequest;

use contracts::{RemoteBillSource, TradeLens, WeTrade};
use relays::{RelayInstance, RelayLaunch};

pub const STL_NETWORK: &str = "trade-lens";
pub const SWT_NETWORK: &str = "we-trade";
pub const STL_LEDGER: &str = "stl-ledger";
pub const SELLER_ORG: &str = "seller-org";
pub const CARRIER_ORG: &str = "carrier-org";
pub const BUYER_ORG: &str = "buyer-org";
pub const TRADE_LENS_CC: &str = "TradeLensCC";
pub const WE_TRADE_CC: &str = "WeTradeCC";
pub const PROOF_POLICY_ID: &str = "stl-bl-policy";
pub const PO_REF: &str = "PO-1001";
pub const LC_AMOUNT: &str = "USD 125000.00";
/// Unique string inside the B/L document; must never appear on a relay's wire.
pub const BL_MARKER: &str = "BL-MARKER-7f3c9a1e5d2b40";

pub const STL_ORGS: [&str; 2] = [SELLER_ORG, CARRIER_ORG];
pub const SWT_ORGS: [&str; 2] = [BUYER_ORG, SELLER_ORG];
pub const STL_PEERS_PER_ORG: usize = 1;
pub const SWT_PEERS_PER_ORG: usize = 2;

/// The bill of lading the carrier records for `po_ref`.
pub fn bill_of_lading(po_ref: &str) -> Vec<u8> {
    format!(
        "{{\"document\":\"bill-of-lading\",\"po\":\"{po_ref}\",\"shipper\":\"{SELLER_ORG}\",\
         \"carrier\":\"{CARRIER_ORG}\",\"vessel\":\"MV Nordic Star\",\"voyage\":\"NS-2291E\",\
         \"port_of_loading\":\"Rotterdam\",\"port_of_discharge\":\"Singapore\",\
         \"goods\":\"240 cartons machine parts\",\"gross_weight_kg\":\"18450\",\"marker\":\"{BL_MARKER}\"}}"
    )
    .into_bytes()
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("setup: {0}")]
    Setup(String),
    #[error("step {step}: {reason}")]
    Step { step: String, reason: String },
    #[error("unknown network {0:?}")]
    UnknownNetwork(String),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Attack {
    #[default]
    None,
    /// A source relay corrupts the sealed result.
    Tamper,
    /// An already consumed proof is presented again.
    Replay,
    /// A requestor whose org holds no exposure rule.
    Unauthorized,
    /// A source relay drops requests; a second honest relay is registered.
    Censor,
}

impl Attack {
    pub const ALL: [Attack; 5] = [Attack::None, Attack::Tamper, Attack::Replay, Attack::Unauthorized, Attack::Censor];

    pub fn as_str(self) -> &'static str {
        match self {
            Attack::None => "none",
            Attack::Tamper => "tamper",
            Attack::Replay => "replay",
            Attack::Unauthorized => "unauthorized",
            Attack::Censor => "censor",
        }
    }
}

impl FromStr for Attack {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attack::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown attack {s:?}"))
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    /// Determines every key, request id and nonce.
    pub seed: u64,
    pub attack: Attack,
    /// Deadline the requesting relay applies to forwarded requests.
    pub deadline: Duration,
    /// Run relays as child processes of this binary instead of threads.
    pub relay_binary: Option<PathBuf>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self { seed: 1, attack: Attack::None, deadline: crate::relay::DEFAULT_DEADLINE, relay_binary: None }
    }
}

/// One transcript record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    pub seq: usize,
    pub step: String,
    pub actor: String,
    pub action: String,
    pub detail: BTreeMap<String, String>,
    pub verdict: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub events: Vec<Event>,
    /// Every verdict the attack expects was reached.
    pub expected_reached: bool,
}

impl Transcript {
    fn push(&mut self, step: &str, actor: &str, action: &str, detail: BTreeMap<String, String>, verdict: impl Into<String>) {
        let seq = self.events.len();
        self.events.push(Event {
            seq,
            step: step.into(),
            actor: actor.into(),
            action: action.into(),
            detail,
            verdict: verdict.into(),
        });
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
            .collect()
    }

    pub fn find(&self, step: &str, action: &str) -> Vec<&Event> {
        self.events.iter().filter(|e| e.step == step && e.action == action).collect()
    }
}

fn detail<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Transcript label for a failed commit.
pub fn ledger_verdict(e: &LedgerError) -> String {
    match e {
        LedgerError::Contract(c) if c.code == "proof" => format!("rejected: {}", c.message),
        LedgerError::Contract(c) => format!("rejected: {}", c.code),
        other => format!("rejected: {other}"),
    }
}

/// Outcome of the remote query step.
pub struct RemoteStep {
    pub outcome: Result<VerifiedRemoteData, ClientError>,
    /// Last request sent.
    pub request: QueryRequest,
    pub attempts: usize,
    pub elapsed: Duration,
}

/// Both networks, their relays, the registry and the client identities.
// Field order is drop order: relays stop before the driver endpoint they
// call, and the working directory goes last.
pub struct Environment {
    spec: ScenarioSpec,
    stl_relay: RelayInstance,
    swt_relay: RelayInstance,
    extra_relays: Vec<(String, RelayInstance)>,
    driver_endpoint: Option<RelayHandle>,
    registry_path: PathBuf,
    stl: Arc<Network>,
    swt: Arc<Network>,
    stl_driver: Arc<SimDriver>,
    stl_seller: Certificate,
    stl_carrier: Certificate,
    swt_buyer: Client,
    swt_seller: Client,
    tx_rng: ChaCha20Rng,
    transcript: Transcript,
    setup_commits: usize,
    last_response_frame: Option<(QueryRequest, Vec<u8>)>,
    last_upload_args: Option<Vec<Vec<u8>>>,
    censor_timeout: Option<Duration>,
    dir: tempfile::TempDir,
}

impl Environment {
    /// Builds both networks, deploys the contracts, starts the relays,
    /// writes the registry and commits the setup transactions.
    pub fn setup(spec: ScenarioSpec) -> Result<Self, ScenarioError> {
        let seed = spec.seed;
        let stl = Arc::new(Network::with_orgs(STL_NETWORK, &STL_ORGS, STL_PEERS_PER_ORG, Some(seed))?);
        let swt = Arc::new(Network::with_orgs(SWT_NETWORK, &SWT_ORGS, SWT_PEERS_PER_ORG, Some(seed))?);

        let stl_policy = EndorsementPolicy::new(STL_ORGS);
        stl.deploy_contract(CMDAC, Arc::new(ConfigAcceptance), stl_policy.clone())?;
        stl.deploy_contract(ECC, Arc::new(ExposureControl), stl_policy.clone())?;
        stl.deploy_contract(
            TRADE_LENS_CC,
            Arc::new(TradeLens { shipper_org: SELLER_ORG.into(), carrier_org: CARRIER_ORG.into() }),
            stl_policy,
        )?;
        let swt_policy = EndorsementPolicy::new(SWT_ORGS);
        swt.deploy_contract(CMDAC, Arc::new(ConfigAcceptance), swt_policy.clone())?;
        swt.deploy_contract(
            WE_TRADE_CC,
            Arc::new(WeTrade {
                buyer_org: BUYER_ORG.into(),
                seller_org: SELLER_ORG.into(),
                source: RemoteBillSource {
                    network_id: STL_NETWORK.into(),
                    ledger_id: STL_LEDGER.into(),
                    contract_name: TRADE_LENS_CC.into(),
                    function_name: contracts::GET_BILL_OF_LADING.into(),
                },
            }),
            swt_policy,
        )?;

        let mut id_rng = network_rng("scenario-clients", Some(seed));
        let issue = |net: &Network, org: &str, subject: &str, rng: &mut ChaCha20Rng| {
            let authority = net.authority(org).expect("org exists");
            ClientIdentity::bootstrap(authority, subject, rng)
        };
        let stl_seller = issue(&stl, SELLER_ORG, "stl-seller-client", &mut id_rng)?;
        let stl_carrier = issue(&stl, CARRIER_ORG, "stl-carrier-client", &mut id_rng)?;
        let swt_buyer = issue(&swt, BUYER_ORG, "swt-buyer-client", &mut id_rng)?;
        let swt_seller = issue(&swt, SELLER_ORG, "swt-seller-client", &mut id_rng)?;

        let dir = tempfile::tempdir()?;
        let registry_path = dir.path().join("registry.txt");
        write_registry_file(&registry_path, []).map_err(RelayError::from)?;

        let stl_driver = Arc::new(SimDriver::new(Arc::clone(&stl), STL_LEDGER));
        let driver_endpoint = match spec.relay_binary {
            Some(_) => Some(serve_driver_endpoint(
                STL_NETWORK,
                "127.0.0.1:0",
                Arc::clone(&stl_driver) as Arc<dyn NetworkDriver>,
                &registry_path,
            )?),
            None => None,
        };

        let mut tx_rng = network_rng("scenario-transactions", Some(seed));
        let seller_seed = tx_rng.next_u64();
        let buyer_seed = tx_rng.next_u64();

        let mut env_relays = Vec::new();
        for (name, network, driver) in [("stl-relay", STL_NETWORK, true), ("swt-relay", SWT_NETWORK, false)] {
            env_relays.push(start_relay(
                &spec,
                dir.path(),
                &registry_path,
                name,
                network,
                FaultMode::None,
                driver.then(|| Arc::clone(&stl_driver)),
                driver_endpoint.as_ref().filter(|_| driver).map(|h| h.local_addr().to_string()),
            )?);
        }
        let swt_relay = env_relays.pop().expect("two relays");
        let stl_relay = env_relays.pop().expect("two relays");
        let swt_addr = swt_relay.addr();

        let mut env = Environment {
            dir,
            registry_path,
            stl_seller: stl_seller.certificate,
            stl_carrier: stl_carrier.certificate,
            swt_buyer: Client::new(swt_buyer, swt_addr.clone(), Some(buyer_seed)),
            swt_seller: Client::new(swt_seller, swt_addr, Some(seller_seed)),
            stl,
            swt,
            stl_driver,
            driver_endpoint,
            stl_relay,
            swt_relay,
            extra_relays: Vec::new(),
            tx_rng,
            transcript: Transcript::default(),
            setup_commits: 0,
            last_response_frame: None,
            last_upload_args: None,
            censor_timeout: None,
            spec,
        };
        env.write_registry(&[])?;
        env.commit_setup()?;
        Ok(env)
    }

    fn commit_setup(&mut self) -> Result<(), ScenarioError> {
        let stl = Arc::clone(&self.stl);
        let swt = Arc::clone(&self.swt);
        let stl_admin = self.stl_seller.clone();
        let swt_admin = self.swt_seller.identity().certificate.clone();
        let stl_config = ForeignNetworkConfig::from_network(&stl).to_canonical_bytes();
        let swt_config = ForeignNetworkConfig::from_network(&swt).to_canonical_bytes();
        let rule = AccessRule::new(SWT_NETWORK, SELLER_ORG, TRADE_LENS_CC, contracts::GET_BILL_OF_LADING);

        self.setup_tx(&stl, &stl_admin, CMDAC, cmdac::RECORD_CONFIG, vec![stl_config])?;
        self.setup_tx(&stl, &stl_admin, CMDAC, cmdac::RECORD_CONFIG, vec![swt_config.clone()])?;
        self.setup_tx(&stl, &stl_admin, ECC, ecc::SET_RULE, vec![rule.to_canonical_bytes()])?;

        self.setup_tx(&swt, &swt_admin, CMDAC, cmdac::RECORD_CONFIG, vec![swt_config])?;
        // SWT records STL's identity roots as STL itself has them on ledger.
        let stl_on_ledger = stl.query(
            &stl.peer_ids()[0],
            CMDAC,
            cmdac::GET_CONFIG,
            &[STL_NETWORK.as_bytes().to_vec()],
            &stl_admin,
            [0; 16],
        )?;
        self.setup_tx(&swt, &swt_admin, CMDAC, cmdac::RECORD_CONFIG, vec![stl_on_ledger])?;
        let policy = VerificationPolicy::new(PROOF_POLICY_ID, STL_NETWORK, STL_ORGS);
        self.setup_tx(&swt, &swt_admin, CMDAC, cmdac::RECORD_POLICY, vec![policy.to_canonical_bytes()])?;
        self.setup_tx(
            &swt,
            &swt_admin,
            WE_TRADE_CC,
            contracts::SET_PROOF_POLICY,
            vec![PROOF_POLICY_ID.as_bytes().to_vec()],
        )?;
        Ok(())
    }

    fn setup_tx(
        &mut self,
        network: &Arc<Network>,
        who: &Certificate,
        contract: &str,
        function: &str,
        args: Vec<Vec<u8>>,
    ) -> Result<CommitReport, ScenarioError> {
        let report = self
            .commit("setup", network, who, contract, function, args)
            .map_err(|e| ScenarioError::Setup(format!("{contract}.{function}: {e}")))?;
        self.setup_commits += 1;
        Ok(report)
    }

    fn next_nonce(&mut self) -> [u8; 16] {
        let mut n = [0u8; 16];
        self.tx_rng.fill_bytes(&mut n);
        n
    }

    /// Submits a transaction and records its verdict.
    fn commit(
        &mut self,
        step: &str,
        network: &Arc<Network>,
        who: &Certificate,
        contract: &str,
        function: &str,
        args: Vec<Vec<u8>>,
    ) -> Result<CommitReport, LedgerError> {
        let nonce = self.next_nonce();
        let outcome = network.submit_transaction(contract, function, &args, who, nonce);
        let mut d = detail([
            ("network", network.network_id().to_string()),
            ("call", format!("{contract}.{function}")),
            ("args_digest", hex::encode(sha256(&crate::codec::encode_list_bytes(&args)))),
        ]);
        let verdict = match &outcome {
            Ok(r) => {
                d.insert("height".into(), r.height.to_string());
                d.insert("tx".into(), hex::encode(r.tx_digest));
                "committed".to_string()
            }
            Err(e) => {
                d.insert("height".into(), network.height().to_string());
                ledger_verdict(e)
            }
        };
        self.transcript.push(step, &who.subject_id, "submit", d, verdict);
        outcome
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn stl(&self) -> &Arc<Network> {
        &self.stl
    }

    pub fn swt(&self) -> &Arc<Network> {
        &self.swt
    }

    pub fn stl_driver(&self) -> &Arc<SimDriver> {
        &self.stl_driver
    }

    pub fn network(&self, network_id: &str) -> Result<&Arc<Network>, ScenarioError> {
        match network_id {
            STL_NETWORK => Ok(&self.stl),
            SWT_NETWORK => Ok(&self.swt),
            other => Err(ScenarioError::UnknownNetwork(other.to_string())),
        }
    }

    pub fn setup_commits(&self) -> usize {
        self.setup_commits
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn seller_client(&self) -> &Client {
        &self.swt_seller
    }

    pub fn buyer_client(&self) -> &Client {
        &self.swt_buyer
    }

    pub fn stl_seller_cert(&self) -> &Certificate {
        &self.stl_seller
    }

    pub fn registry_path(&self) -> &std::path::Path {
        &self.registry_path
    }

    /// Raw frame of the last response the seller client received, with
    /// the request it answered.
    pub fn last_response_frame(&self) -> Option<&(QueryRequest, Vec<u8>)> {
        self.last_response_frame.as_ref()
    }

    /// Arguments of the last committed `UploadDispatchDocs`.
    pub fn last_upload_args(&self) -> Option<&Vec<Vec<u8>>> {
        self.last_upload_args.as_ref()
    }

    /// How long the censored query took to fail, in the censor attack.
    pub fn censor_timeout(&self) -> Option<Duration> {
        self.censor_timeout
    }

    /// Every relay's observed byte stream, by relay name.
    pub fn relay_wire_transcripts(&self) -> Vec<(String, Vec<u8>)> {
        let mut out = vec![
            ("stl-relay".to_string(), self.stl_relay.wire_bytes()),
            ("swt-relay".to_string(), self.swt_relay.wire_bytes()),
        ];
        out.extend(self.extra_relays.iter().map(|(n, r)| (n.clone(), r.wire_bytes())));
        out
    }

    pub fn relay_log_lines(&self) -> Vec<(String, Vec<String>)> {
        let mut out = vec![
            ("stl-relay".to_string(), self.stl_relay.log_lines()),
            ("swt-relay".to_string(), self.swt_relay.log_lines()),
        ];
        out.extend(self.extra_relays.iter().map(|(n, r)| (n.clone(), r.log_lines())));
        out
    }

    /// Points `trade-lens` at the given relays, in preference order;
    /// empty means the honest STL relay.
    pub fn write_registry(&mut self, stl_relays: &[String]) -> Result<(), ScenarioError> {
        let stl_addrs = if stl_relays.is_empty() { vec![self.stl_relay.addr()] } else { stl_relays.to_vec() };
        let swt_addr = self.swt_relay.addr();
        let mut entries: Vec<(&str, &str)> = stl_addrs.iter().map(|a| (STL_NETWORK, a.as_str())).collect();
        entries.push((SWT_NETWORK, swt_addr.as_str()));
        write_registry_file(&self.registry_path, entries).map_err(RelayError::from)?;
        Ok(())
    }

    /// Starts an additional STL relay with `fault` and returns its address.
    pub fn start_extra_stl_relay(&mut self, name: &str, fault: FaultMode) -> Result<String, ScenarioError> {
        let endpoint = self.driver_endpoint.as_ref().map(|h| h.local_addr().to_string());
        let relay = start_relay(
            &self.spec,
            self.dir.path(),
            &self.registry_path,
            name,
            STL_NETWORK,
            fault,
            Some(Arc::clone(&self.stl_driver)),
            endpoint,
        )?;
        let addr = relay.addr();
        self.extra_relays.push((name.to_string(), relay));
        Ok(addr)
    }

    pub fn honest_stl_relay_addr(&self) -> String {
        self.stl_relay.addr()
    }

    /// The text dump of a network's first replica, ending with its chain
    /// verification verdict.
    pub fn inspect(&self, network_id: &str) -> Result<String, ScenarioError> {
        let net = self.network(network_id)?;
        Ok(net.export_transcript(&net.peer_ids()[0])?)
    }

    fn registry_event(&mut self, step: &str, stl_relays: &[&str]) {
        self.transcript.push(
            step,
            "operator",
            "registry",
            detail([(STL_NETWORK, stl_relays.join(","))]),
            "written",
        );
    }

    /// Steps 1 to 8: purchase order, letter of credit, export order and
    /// bill of lading.
    pub fn prepare_trade(&mut self) -> Result<(), ScenarioError> {
        self.transcript.push(
            "1",
            "buyer",
            "purchase-order",
            detail([("po", PO_REF.to_string())]),
            "agreed-offline",
        );
        let swt = Arc::clone(&self.swt);
        let stl = Arc::clone(&self.stl);
        let buyer = self.swt_buyer.identity().certificate.clone();
        let po = PO_REF.as_bytes().to_vec();
        self.commit("2-4", &swt, &buyer, WE_TRADE_CC, contracts::ISSUE_LC, vec![po.clone(), LC_AMOUNT.into()])
            .map_err(|e| step_failed("2-4", e))?;
        let shipper = self.stl_seller.clone();
        self.commit("5-8", &stl, &shipper, TRADE_LENS_CC, contracts::CREATE_EXPORT_ORDER, vec![po.clone()])
            .map_err(|e| step_failed("5-8", e))?;
        let carrier = self.stl_carrier.clone();
        self.commit("5-8", &stl, &carrier, TRADE_LENS_CC, contracts::RECORD_BILL_OF_LADING, vec![po, bill_of_lading(PO_REF)])
            .map_err(|e| step_failed("5-8", e))?;
        Ok(())
    }

    /// The target of step 9.
    pub fn bill_target() -> RemoteTarget {
        RemoteTarget {
            dest_network_id: STL_NETWORK.into(),
            ledger_id: STL_LEDGER.into(),
            contract_name: TRADE_LENS_CC.into(),
            function_name: contracts::GET_BILL_OF_LADING.into(),
            args: vec![PO_REF.as_bytes().to_vec()],
        }
    }

    /// Verification policy and source identity roots as recorded on SWT.
    pub fn recorded_policy_and_config(&self) -> Result<(VerificationPolicy, ForeignNetworkConfig), ScenarioError> {
        let peer = &self.swt.peer_ids()[0];
        let me = &self.swt_seller.identity().certificate;
        let policy_bytes =
            self.swt
                .query(peer, CMDAC, cmdac::GET_POLICY, &[PROOF_POLICY_ID.as_bytes().to_vec()], me, [0; 16])?;
        let config_bytes =
            self.swt
                .query(peer, CMDAC, cmdac::GET_CONFIG, &[STL_NETWORK.as_bytes().to_vec()], me, [0; 16])?;
        let policy = VerificationPolicy::from_canonical_bytes(&policy_bytes)
            .map_err(|e| ScenarioError::Setup(format!("recorded policy: {e}")))?;
        let config = ForeignNetworkConfig::from_canonical_bytes(&config_bytes)
            .map_err(|e| ScenarioError::Setup(format!("recorded config: {e}")))?;
        Ok((policy, config))
    }

    /// Step 9: query the B/L through both relays, retrying up to
    /// `max_attempts` times on timeouts and unreachable relays.
    pub fn query_bill(&mut self, as_buyer: bool, max_attempts: usize) -> Result<RemoteStep, ScenarioError> {
        let (policy, config) = self.recorded_policy_and_config()?;
        let target = Self::bill_target();
        let started = Instant::now();
        let mut attempts = 0;
        let (outcome, request) = loop {
            attempts += 1;
            let client = if as_buyer { &self.swt_buyer } else { &self.swt_seller };
            let actor = client.identity().certificate.subject_id.clone();
            let attempt = client.attempt(&target, &policy, &config, self.spec.deadline);
            let mut d = detail([
                ("attempt", attempts.to_string()),
                ("request_id", hex::encode(attempt.request.request_id)),
                ("nonce", hex::encode(attempt.request.nonce)),
                ("request_digest", hex::encode(attempt.request.digest())),
                ("policy", attempt.request.verification_policy.required_orgs.join(",")),
            ]);
            if let Some((response, frame)) = &attempt.response {
                d.insert("status".into(), response.status.as_str().to_string());
                d.insert("attestations".into(), response.attestation_count().to_string());
                if !as_buyer {
                    self.last_response_frame = Some((attempt.request.clone(), frame.clone()));
                }
            }
            let verdict = match &attempt.outcome {
                Ok(v) => {
                    d.insert("result_digest".into(), hex::encode(sha256(&v.result)));
                    d.insert("proof_digest".into(), hex::encode(sha256(&encode_proof(&v.proof))));
                    "ok".to_string()
                }
                Err(e) => e.verdict(),
            };
            self.transcript.push("9", &actor, "remote-query", d, verdict);
            match attempt.outcome {
                Err(e) if e.retryable() && attempts < max_attempts => continue,
                other => break (other, attempt.request),
            }
        };
        Ok(RemoteStep { outcome, request, attempts, elapsed: started.elapsed() })
    }

    /// Step 10: submit `UploadDispatchDocs` embedding the verified data.
    pub fn upload_docs(&mut self, verified: &VerifiedRemoteData) -> Result<CommitReport, LedgerError> {
        let tx = build_dependent_transaction(
            verified,
            WE_TRADE_CC,
            contracts::UPLOAD_DISPATCH_DOCS,
            &[PO_REF.as_bytes().to_vec()],
        )
        .map_err(|e| LedgerError::Contract(crate::ledger::ContractError::new("oversize", e.to_string())))?;
        self.submit_upload(tx.args)
    }

    /// Submits `UploadDispatchDocs` with raw arguments.
    pub fn submit_upload(&mut self, args: Vec<Vec<u8>>) -> Result<CommitReport, LedgerError> {
        let swt = Arc::clone(&self.swt);
        let seller = self.swt_seller.identity().certificate.clone();
        let out = self.commit("10", &swt, &seller, WE_TRADE_CC, contracts::UPLOAD_DISPATCH_DOCS, args.clone());
        if out.is_ok() {
            self.last_upload_args = Some(args);
        }
        out
    }

    fn request_payment(&mut self) -> Result<CommitReport, LedgerError> {
        let swt = Arc::clone(&self.swt);
        let seller = self.swt_seller.identity().certificate.clone();
        self.commit("10", &swt, &seller, WE_TRADE_CC, contracts::REQUEST_PAYMENT, vec![PO_REF.as_bytes().to_vec()])
    }

    /// Bytes stored under `key` on the first replica of `network`.
    pub fn stored(&self, network: &Network, key: &[u8]) -> Option<Vec<u8>> {
        network.snapshot(&network.peer_ids()[0]).ok()?.world_state.get(key).cloned()
    }

    /// Runs the configured attack and appends the summary record.
    pub fn run(&mut self) -> Result<Transcript, ScenarioError> {
        let swt_before = self.swt.height();
        let expected = match self.spec.attack {
            Attack::None => self.run_happy_path()?,
            Attack::Tamper => self.run_tamper()?,
            Attack::Replay => self.run_replay()?,
            Attack::Unauthorized => self.run_unauthorized()?,
            Attack::Censor => self.run_censor()?,
        };
        let stl_ok = self.stl.peer_ids().iter().all(|p| self.stl.verify_chain(p).unwrap_or(false));
        let swt_ok = self.swt.peer_ids().iter().all(|p| self.swt.verify_chain(p).unwrap_or(false));
        let consistent = self.stl.replicas_consistent() && self.swt.replicas_consistent();
        let reached = expected && stl_ok && swt_ok && consistent;
        self.transcript.push(
            "final",
            "scenario",
            "summary",
            detail([
                ("attack", self.spec.attack.as_str().to_string()),
                ("stl_height", self.stl.height().to_string()),
                ("swt_height", self.swt.height().to_string()),
                ("swt_height_delta", (self.swt.height() - swt_before).to_string()),
                ("stl_verify_chain", stl_ok.to_string()),
                ("swt_verify_chain", swt_ok.to_string()),
                ("replicas_consistent", consistent.to_string()),
            ]),
            if reached { "expected" } else { "unexpected" },
        );
        self.transcript.expected_reached = reached;
        Ok(self.transcript.clone())
    }

    /// Steps 1 to 10 with honest relays.
    pub fn run_happy_path(&mut self) -> Result<bool, ScenarioError> {
        self.prepare_trade()?;
        let step = self.query_bill(false, 1)?;
        let verified = step.outcome.map_err(|e| step_failed("9", e))?;
        self.finish_trade(&verified)
    }

    /// Step 10 and the B/L fidelity check.
    fn finish_trade(&mut self, verified: &VerifiedRemoteData) -> Result<bool, ScenarioError> {
        self.upload_docs(verified).map_err(|e| step_failed("10", e))?;
        self.request_payment().map_err(|e| step_failed("10", e))?;
        let on_stl = self.stored(&self.stl, &contracts::bill_key(PO_REF.as_bytes()));
        let on_swt = self.stored(&self.swt, &contracts::docs_key(PO_REF.as_bytes()));
        let same = on_stl.is_some() && on_stl == on_swt;
        self.transcript.push(
            "10",
            "scenario",
            "compare-bill",
            detail([("digest", on_swt.as_deref().map(|b| hex::encode(sha256(b))).unwrap_or_default())]),
            if same { "identical" } else { "different" },
        );
        Ok(same)
    }

    fn run_tamper(&mut self) -> Result<bool, ScenarioError> {
        self.prepare_trade()?;
        let tamper = self.start_extra_stl_relay("stl-relay-tamper", FaultMode::TamperResult)?;
        self.write_registry(&[tamper])?;
        self.registry_event("9", &["stl-relay-tamper"]);
        let before = self.swt.height();
        let step = self.query_bill(false, 1)?;
        let rejected = matches!(
            step.outcome,
            Err(ClientError::ProofTamper) | Err(ClientError::Preflight(crate::system::ProofRejection::Signature))
        );
        let unchanged = self.swt.height() == before;
        self.transcript.push(
            "10",
            "swt-seller-client",
            "upload-dispatch-docs",
            detail([("swt_height", self.swt.height().to_string())]),
            match &step.outcome {
                Ok(_) => "accepted".to_string(),
                Err(e) => format!("rejected: {}", e.verdict()),
            },
        );
        Ok(rejected && unchanged)
    }

    fn run_replay(&mut self) -> Result<bool, ScenarioError> {
        self.prepare_trade()?;
        // The replaying relay serves the first query honestly and caches it.
        let replayer = self.start_extra_stl_relay("stl-relay-replay", FaultMode::ReplayResponse)?;
        self.write_registry(&[replayer])?;
        self.registry_event("9", &["stl-relay-replay"]);
        let first = self.query_bill(false, 1)?;
        let verified = first.outcome.map_err(|e| step_failed("9", e))?;
        if !self.finish_trade(&verified)? {
            return Ok(false);
        }
        let consumed = self.last_upload_args.clone().expect("upload committed");

        // A second query: the relay answers with the cached response.
        let second = self.query_bill(false, 1)?;
        let preflight_rejects = matches!(second.outcome, Err(ClientError::Preflight(_)));

        // Resubmitting the consumed proof, as a client skipping pre-flight
        // would do with the replayed one.
        let before = self.swt.height();
        let resubmit = self.submit_upload(consumed.clone());
        let replay_rejected = matches!(
            &resubmit,
            Err(LedgerError::Contract(c)) if c.code == "proof" && c.message == "nonce-replayed"
        );

        // Every SWT peer reaches the same verdict.
        let (_, result, proof, digest, nonce) =
            crate::client::split_dependent_args(&consumed).expect("well-formed upload args");
        let args = vec![
            PROOF_POLICY_ID.as_bytes().to_vec(),
            digest.to_vec(),
            nonce.to_vec(),
            result.to_vec(),
            encode_proof(&proof),
        ];
        let seller = self.swt_seller.identity().certificate.clone();
        let mut all_replayed = true;
        for peer in self.swt.peer_ids() {
            let verdict = self
                .swt
                .query(&peer, CMDAC, cmdac::VALIDATE_PROOF, &args, &seller, [0; 16])
                .ok()
                .and_then(|b| ProofVerdict::from_canonical_bytes(&b).ok());
            let label = match verdict {
                Some(ProofVerdict::Valid) => "valid".to_string(),
                Some(ProofVerdict::Invalid(r)) => r.code().to_string(),
                None => "error".to_string(),
            };
            all_replayed &= label == "nonce-replayed";
            self.transcript.push("10", &peer, "validate-proof", detail([("nonce", hex::encode(nonce))]), label);
        }
        Ok(preflight_rejects && replay_rejected && all_replayed && self.swt.height() == before)
    }

    fn run_unauthorized(&mut self) -> Result<bool, ScenarioError> {
        self.prepare_trade()?;
        let step = self.query_bill(true, 1)?;
        let denied = matches!(&step.outcome, Err(ClientError::Denied(r)) if r == "access");
        let request = step.request;
        let events: Vec<_> = self
            .stl_driver
            .events()
            .into_iter()
            .filter(|e| e.request_id == request.request_id)
            .collect();
        for e in &events {
            self.transcript.push("9", &e.peer_id, "check-access", detail([("org", e.org_id.clone())]), e.outcome.clone());
        }
        let all_deny = events.len() == request.verification_policy.required_orgs.len()
            && events.iter().all(|e| e.outcome.starts_with("check_access=deny"));
        let no_attestations = self
            .transcript
            .events
            .iter()
            .rev()
            .find(|e| e.action == "remote-query")
            .is_some_and(|e| e.detail.get("attestations").map_or(true, |n| n == "0"));
        Ok(denied && all_deny && no_attestations)
    }

    fn run_censor(&mut self) -> Result<bool, ScenarioError> {
        self.prepare_trade()?;
        let censor = self.start_extra_stl_relay("stl-relay-censor", FaultMode::DropRequests)?;

        // Only the censoring relay is registered.
        self.write_registry(&[censor.clone()])?;
        self.registry_event("9", &["stl-relay-censor"]);
        let lone = self.query_bill(false, 1)?;
        let timed_out = matches!(&lone.outcome, Err(e) if e.retryable());
        self.censor_timeout = Some(lone.elapsed);

        // Censoring relay first, honest relay second.
        let honest = self.honest_stl_relay_addr();
        self.write_registry(&[censor, honest])?;
        self.registry_event("9", &["stl-relay-censor", "stl-relay"]);
        let failover = self.query_bill(false, 2)?;
        let verified = failover.outcome.map_err(|e| step_failed("9", e))?;
        let finished = self.finish_trade(&verified)?;
        Ok(timed_out && failover.attempts == 2 && finished)
    }
}

fn step_failed(step: &str, e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Step { step: step.to_string(), reason: e.to_string() }
}

#[allow(clippy::too_many_arguments)]
fn start_relay(
    spec: &ScenarioSpec,
    work_dir: &std::path::Path,
    registry_path: &std::path::Path,
    name: &str,
    network_id: &str,
    fault: FaultMode,
    driver: Option<Arc<SimDriver>>,
    driver_endpoint: Option<String>,
) -> Result<RelayInstance, ScenarioError> {
    let launch = RelayLaunch {
        name,
        network_id,
        registry_path,
        fault,
        deadline: spec.deadline,
        driver: driver.map(|d| d as Arc<dyn NetworkDriver>),
        driver_endpoint,
        work_dir,
    };
    match &spec.relay_binary {
        Some(bin) => relays::start_process(bin, launch),
        None => relays::start_in_process(launch),
    }
}

/// Everything a finished run produces.
pub struct ScenarioReport {
    pub transcript: Transcript,
    pub stl_dump: String,
    pub swt_dump: String,
}

/// Sets up, runs the attack, and dumps both ledgers.
pub fn run_scenario(spec: ScenarioSpec) -> Result<ScenarioReport, ScenarioError> {
    let mut env = Environment::setup(spec)?;
    let transcript = env.run()?;
    Ok(ScenarioReport { transcript, stl_dump: env.inspect(STL_NETWORK)?, swt_dump: env.inspect(SWT_NETWORK)? })
}
